"""Anisotropic variable-dimension elliptic solver for the stream function.

Solves  A psi = omega  with

    A = -( delta^2 d_xi^2 + delta^2 (n/xi) d_xi + d_eta^2 )

on the mapped tensor mesh. The radial part is discretized in conservative
(flux) form,

    (1/xi^n) d_xi ( xi^n psi_xi )  ->  [ g_{i+1/2} dpsi - g_{i-1/2} dpsi ] / W_i,

with g evaluated from the analytic mesh map at half nodes. This makes the
discrete operator exactly self-adjoint in the inner product weighted by
W_i * W_j (the xi^n-weighted cell measure). The axis face carries zero flux;
the axis row volume is chosen so the row is consistent with the regular limit
(1+n) psi_xixi at xi = 0. Far-field faces carry zero flux (homogeneous
Neumann); eta = 0 is a zero-Dirichlet row in the symmetric sector (odd
fields) and zero-flux otherwise, in which case the all-Neumann null space is
fixed by pinning the far corner node to zero.

The default solver is geometric multigrid (red-black Gauss-Seidel V-cycles,
dense bottom solve); for strong anisotropy (delta > 4) the `auto` mode falls
back to Jacobi-preconditioned conjugate gradients in the weighted inner
product.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import ConfigError, EllipticConvergenceError, EllipticError
from .grid import Grid

_CG_DELTA_THRESHOLD = 4.0
_BOTTOM_CELLS = 8           # stop coarsening at or below this many cells
_DENSE_LIMIT = 4500         # max unknowns for the dense bottom solve


@dataclass
class EllipticParams:
    n: float
    delta: float = 1.0
    bc: str = "neumann-zero"
    tol: float = 1e-10
    max_iter: int = 200
    solver: str = "auto"          # auto | fastdiag | multigrid | cg
    symmetric_eta0: bool = True   # odd fields: zero-Dirichlet row at eta=0

    def __post_init__(self):
        if self.delta <= 0.0:
            raise ConfigError("elliptic anisotropy delta must be positive")
        if self.tol <= 0.0:
            raise ConfigError("elliptic tolerance must be positive")
        if self.bc != "neumann-zero":
            raise ConfigError(f"unsupported far-field condition {self.bc!r}")
        if self.solver not in ("auto", "fastdiag", "multigrid", "cg"):
            raise ConfigError(f"unknown elliptic solver {self.solver!r}")


@dataclass
class _Axis:
    """One direction of one multigrid level."""
    ncell: int
    x: np.ndarray
    xs: np.ndarray
    x_half: np.ndarray
    xs_half: np.ndarray
    hs: float


def _axis_from_map(m, ncell: int) -> _Axis:
    s = np.linspace(0.0, 1.0, ncell + 1)
    sh = (s[:-1] + s[1:]) / 2.0
    x = m.value(s)
    x[0] = 0.0
    return _Axis(ncell, x, m.deriv(s), m.value(sh), m.deriv(sh), 1.0 / ncell)


_GEOM_CACHE: dict = {}


def _grid_key(grid: Grid) -> tuple:
    xm, em = grid.xi_map, grid.eta_map
    return (grid.nxi, grid.neta, xm.kind, xm.extent, xm.beta,
            em.kind, em.extent, em.beta)


def _levels(grid: Grid) -> list[tuple[_Axis, _Axis]]:
    """Geometry hierarchy for `grid` (cached on the map parameters)."""
    key = _grid_key(grid)
    hit = _GEOM_CACHE.get(key)
    if hit is not None:
        return hit
    out = []
    nx, ny = grid.nxi, grid.neta
    while True:
        out.append((_axis_from_map(grid.xi_map, nx), _axis_from_map(grid.eta_map, ny)))
        if nx % 2 or ny % 2 or min(nx, ny) // 2 < _BOTTOM_CELLS:
            break
        nx //= 2
        ny //= 2
    if len(_GEOM_CACHE) > 32:
        _GEOM_CACHE.clear()
    _GEOM_CACHE[key] = out
    return out


def radial_flux_coeffs(ax: _Axis, n_exp: float):
    """(face conductances g, row weights W) for the conservative radial part.

    Row i of (1/xi^q)(xi^q f_xi)_xi is [g_i (f_{i+1}-f_i) - g_{i-1}(f_i-f_{i-1})]/W_i.
    W_0 is chosen so the axis row reproduces (1+q) f_xixi at xi=0 when 1+q > 0;
    otherwise the axis row is not meaningful (callers overwrite it).
    """
    g = ax.x_half ** n_exp / ax.xs_half
    W = np.empty_like(ax.x)
    W[1:] = ax.x[1:] ** n_exp * ax.xs[1:] * ax.hs ** 2
    W[-1] *= 0.5
    if 1.0 + n_exp > 1e-9:
        W[0] = g[0] * ax.x[1] ** 2 / (2.0 * (1.0 + n_exp))
    else:
        W[0] = W[1]
    return g, W


def axial_flux_coeffs(ax: _Axis, half_bottom: bool):
    """(face conductances, row weights) for the plain d_eta^2 part."""
    g = 1.0 / ax.xs_half
    W = ax.xs * ax.hs ** 2
    W[-1] *= 0.5
    if half_bottom:
        W[0] *= 0.5
    return g, W


class _Stencil:
    """Assembled 5-point operator on one level."""

    def __init__(self, ax: _Axis, ay: _Axis, n: float, delta: float,
                 symmetric_eta0: bool, pin_corner: bool | None = None):
        gx, Wx = radial_flux_coeffs(ax, n)
        gy, Wy = axial_flux_coeffs(ay, half_bottom=not symmetric_eta0)
        d2 = delta * delta
        nx, ny = ax.ncell, ay.ncell
        shape = (nx + 1, ny + 1)

        cE = np.zeros(shape)
        cW = np.zeros(shape)
        cN = np.zeros(shape)
        cS = np.zeros(shape)
        cE[:-1, :] = (d2 * gx / Wx[:-1])[:, None]
        cW[1:, :] = (d2 * gx / Wx[1:])[:, None]
        cN[:, :-1] = (gy / Wy[:-1])[None, :]
        cS[:, 1:] = (gy / Wy[1:])[None, :]

        self.symmetric_eta0 = symmetric_eta0
        self.pinned = (not symmetric_eta0) if pin_corner is None else pin_corner
        if symmetric_eta0:
            cE[:, 0] = cW[:, 0] = cN[:, 0] = cS[:, 0] = 0.0
        elif self.pinned:
            cE[-1, -1] = cW[-1, -1] = cN[-1, -1] = cS[-1, -1] = 0.0

        diag = cE + cW + cN + cS
        if symmetric_eta0:
            diag[:, 0] = 1.0
        elif self.pinned:
            diag[-1, -1] = 1.0

        self.cE, self.cW, self.cN, self.cS, self.diag = cE, cW, cN, cS, diag
        self.weight = np.outer(Wx, Wy)
        self.shape = shape

    def fix_rows(self, arr: np.ndarray) -> None:
        """Zero the constrained rows (Dirichlet / gauge pin)."""
        if self.symmetric_eta0:
            arr[:, 0] = 0.0
        elif self.pinned:
            arr[-1, -1] = 0.0

    def apply(self, psi: np.ndarray) -> np.ndarray:
        p = np.pad(psi, 1)
        out = (self.diag * psi
               - self.cE * p[2:, 1:-1] - self.cW * p[:-2, 1:-1]
               - self.cN * p[1:-1, 2:] - self.cS * p[1:-1, :-2])
        return out

    def residual(self, psi: np.ndarray, rhs: np.ndarray) -> np.ndarray:
        return rhs - self.apply(psi)

    def smooth(self, psi: np.ndarray, rhs: np.ndarray, sweeps: int) -> None:
        """Red-black Gauss-Seidel, in place."""
        for _ in range(sweeps):
            for color in (0, 1):
                p = np.pad(psi, 1)
                num = (rhs
                       + self.cE * p[2:, 1:-1] + self.cW * p[:-2, 1:-1]
                       + self.cN * p[1:-1, 2:] + self.cS * p[1:-1, :-2])
                for (i0, j0) in ((0, 0), (1, 1)) if color == 0 else ((0, 1), (1, 0)):
                    sl = (slice(i0, None, 2), slice(j0, None, 2))
                    psi[sl] = num[sl] / self.diag[sl]

    def dense_matrix(self) -> np.ndarray:
        nx1, ny1 = self.shape
        K = nx1 * ny1
        A = np.zeros((K, K))
        idx = np.arange(K).reshape(nx1, ny1)
        A[idx.ravel(), idx.ravel()] = self.diag.ravel()
        A[idx[:-1, :].ravel(), idx[1:, :].ravel()] -= self.cE[:-1, :].ravel()
        A[idx[1:, :].ravel(), idx[:-1, :].ravel()] -= self.cW[1:, :].ravel()
        A[idx[:, :-1].ravel(), idx[:, 1:].ravel()] -= self.cN[:, :-1].ravel()
        A[idx[:, 1:].ravel(), idx[:, :-1].ravel()] -= self.cS[:, 1:].ravel()
        return A


def _restrict(fine: np.ndarray) -> np.ndarray:
    """Full-weighting restriction for node-centered grids (zero-padded)."""
    p = np.pad(fine, 1)
    c = (4.0 * p[1:-1:2, 1:-1:2]
         + 2.0 * (p[0:-2:2, 1:-1:2] + p[2::2, 1:-1:2]
                  + p[1:-1:2, 0:-2:2] + p[1:-1:2, 2::2])
         + (p[0:-2:2, 0:-2:2] + p[2::2, 0:-2:2]
            + p[0:-2:2, 2::2] + p[2::2, 2::2])) / 16.0
    return c


def _prolong(coarse: np.ndarray, shape) -> np.ndarray:
    f = np.zeros(shape)
    f[::2, ::2] = coarse
    f[1::2, ::2] = 0.5 * (coarse[:-1, :] + coarse[1:, :])
    f[::2, 1::2] = 0.5 * (f[::2, 0:-1:2] + f[::2, 2::2])
    f[1::2, 1::2] = 0.25 * (coarse[:-1, :-1] + coarse[1:, :-1]
                            + coarse[:-1, 1:] + coarse[1:, 1:])
    return f


class _MultigridSolver:
    def __init__(self, grid: Grid, n: float, delta: float, symmetric_eta0: bool):
        self.stencils = [_Stencil(ax, ay, n, delta, symmetric_eta0)
                         for ax, ay in _levels(grid)]
        bottom = self.stencils[-1]
        K = bottom.shape[0] * bottom.shape[1]
        self._bottom_lu = None
        if K <= _DENSE_LIMIT:
            self._bottom_lu = scipy.linalg.lu_factor(bottom.dense_matrix())

    def _bottom_solve(self, rhs: np.ndarray) -> np.ndarray:
        st = self.stencils[-1]
        if self._bottom_lu is not None:
            return scipy.linalg.lu_solve(self._bottom_lu, rhs.ravel()).reshape(st.shape)
        psi = np.zeros(st.shape)
        st.smooth(psi, rhs, 200)
        return psi

    def _vcycle(self, level: int, psi: np.ndarray, rhs: np.ndarray) -> None:
        st = self.stencils[level]
        if level == len(self.stencils) - 1:
            psi[:] = self._bottom_solve(rhs)
            return
        st.smooth(psi, rhs, 2)
        res = st.residual(psi, rhs)
        st.fix_rows(res)
        crhs = _restrict(res)
        self.stencils[level + 1].fix_rows(crhs)
        corr = np.zeros_like(crhs)
        self._vcycle(level + 1, corr, crhs)
        self.stencils[level + 1].fix_rows(corr)
        psi += _prolong(corr, st.shape)
        st.fix_rows(psi)
        st.smooth(psi, rhs, 2)

    def solve(self, rhs: np.ndarray, psi0, tol: float, max_iter: int):
        st = self.stencils[0]
        rhs = rhs.copy()
        st.fix_rows(rhs)
        psi = np.zeros(st.shape) if psi0 is None else psi0.copy()
        st.fix_rows(psi)
        scale = float(np.max(np.abs(rhs)))
        if scale == 0.0:
            return np.zeros(st.shape), [0.0]
        history = []
        for _ in range(max_iter):
            self._vcycle(0, psi, rhs)
            res = float(np.max(np.abs(st.residual(psi, rhs)))) / scale
            history.append(res)
            if res <= tol:
                return psi, history
        raise EllipticConvergenceError(history[-1] * scale, tol * scale, max_iter)


def _cg_solve(st: _Stencil, rhs: np.ndarray, psi0, tol: float, max_iter: int):
    """Jacobi-preconditioned CG in the W-weighted inner product.

    The constrained rows are projected out so the iteration lives on the SPD
    reduced system; for the all-Neumann case constants are projected out and
    the far-corner gauge is applied afterwards.
    """
    W = st.weight.copy()
    if st.symmetric_eta0:
        W[:, 0] = 0.0

    def inner(a, b):
        return float(np.sum(W * a * b))

    def project(v):
        st.fix_rows(v)
        if not st.symmetric_eta0:
            v -= np.sum(W * v) / np.sum(W)
            st.fix_rows(v)

    rhs = rhs.copy()
    project(rhs)
    scale = float(np.max(np.abs(rhs)))
    if scale == 0.0:
        return np.zeros(st.shape), [0.0]
    psi = np.zeros(st.shape) if psi0 is None else psi0.copy()
    project(psi)
    r = st.residual(psi, rhs)
    project(r)
    z = r / st.diag
    p = z.copy()
    rz = inner(r, z)
    history = [float(np.max(np.abs(r))) / scale]
    for _ in range(max_iter):
        if history[-1] <= tol:
            if not st.symmetric_eta0:
                psi -= psi[-1, -1]
            return psi, history
        Ap = st.apply(p)
        project(Ap)
        alpha = rz / inner(p, Ap)
        psi += alpha * p
        r -= alpha * Ap
        history.append(float(np.max(np.abs(r))) / scale)
        z = r / st.diag
        rz_new = inner(r, z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise EllipticConvergenceError(history[-1] * scale, tol * scale, max_iter)


def _check_params(params: EllipticParams):
    if params.n < 0.0:
        raise EllipticError(f"operator is indefinite for n = {params.n} < 0")


def _tridiag(g: np.ndarray, W: np.ndarray) -> np.ndarray:
    """Dense 1-D flux-form operator (PSD in the W inner product)."""
    m = W.size
    T = np.zeros((m, m))
    i = np.arange(m - 1)
    T[i, i + 1] = -g / W[:-1]
    T[i + 1, i] = -g / W[1:]
    np.fill_diagonal(T, 0.0)
    T[i, i] += g / W[:-1]
    T[i + 1, i + 1] += g / W[1:]
    return T


_EIG_CACHE: dict = {}


def _cached_eig(key, builder):
    hit = _EIG_CACHE.get(key)
    if hit is None:
        if len(_EIG_CACHE) > 64:
            _EIG_CACHE.clear()
        hit = _EIG_CACHE[key] = builder()
    return hit


def _eig_radial(grid: Grid, n: float):
    def build():
        ax = _levels(grid)[0][0]
        gx, Wx = radial_flux_coeffs(ax, n)
        sx = np.sqrt(Wx)
        Bx = _tridiag(gx, Wx) * (sx[:, None] / sx[None, :])
        lx, Qx = np.linalg.eigh(0.5 * (Bx + Bx.T))
        return lx, Qx, sx
    return _cached_eig(("radial", _grid_key(grid), float(n)), build)


def _eig_axial(grid: Grid, symmetric_eta0: bool):
    def build():
        ay = _levels(grid)[0][1]
        gy, Wy = axial_flux_coeffs(ay, half_bottom=not symmetric_eta0)
        if symmetric_eta0:
            # unknowns j >= 1; the eta=0 column is a zero-Dirichlet row
            Ty = _tridiag(gy, Wy)[1:, 1:]
            sy = np.sqrt(Wy[1:])
        else:
            Ty = _tridiag(gy, Wy)
            sy = np.sqrt(Wy)
        By = Ty * (sy[:, None] / sy[None, :])
        ly, Qy = np.linalg.eigh(0.5 * (By + By.T))
        return ly, Qy, sy
    return _cached_eig(("axial", _grid_key(grid), symmetric_eta0), build)


class _FastDiagSolver:
    """Direct solver via eigendecomposition of the separable 1-D parts.

    The 5-point operator is a Kronecker sum delta^2 (Tx x I) + (I x Ty); both
    parts are symmetrized with the square roots of their row weights and
    diagonalized, giving an exact solve by two dense transforms per side.
    Iterative refinement mops up the last rounding error. In the all-Neumann
    case the incompatible component of the right-hand side is projected out
    and the far-corner gauge applied afterwards.
    """

    def __init__(self, grid: Grid, n: float, delta: float, symmetric_eta0: bool):
        self.symmetric_eta0 = symmetric_eta0
        self.delta2 = delta * delta
        self.j0 = 1 if symmetric_eta0 else 0
        self.lx, self.Qx, self.sx = _eig_radial(grid, n)
        self.ly, self.Qy, self.sy = _eig_axial(grid, symmetric_eta0)
        ax, ay = _levels(grid)[0]
        # sparse stencil apply: residuals measured without the dense-transform
        # rounding floor, so iterative refinement reaches the tight tolerance
        self.stencil = _Stencil(ax, ay, n, delta, symmetric_eta0, pin_corner=False)

        zero_x = self.lx < 1e-12 * max(self.lx[-1], 1e-300)
        zero_y = self.ly < 1e-12 * max(self.ly[-1], 1e-300)
        self.null = zero_x[:, None] & zero_y[None, :]
        denom = self.delta2 * self.lx[:, None] + self.ly[None, :]
        self.denom = np.where(self.null, 1.0, denom)
        self.weight = np.outer(self.sx ** 2, self.sy ** 2)  # unknown-block weight

    def _project(self, rhs_block: np.ndarray) -> np.ndarray:
        if self.symmetric_eta0 or not np.any(self.null):
            return rhs_block
        w = self.weight
        return rhs_block - np.sum(w * rhs_block) / np.sum(w)

    def _solve_once(self, rhs: np.ndarray) -> np.ndarray:
        w = rhs[:, self.j0:] * self.sx[:, None] * self.sy[None, :]
        w = self.Qx.T @ w @ self.Qy
        w /= self.denom
        w[self.null] = 0.0
        w = self.Qx @ w @ self.Qy.T
        psi = np.zeros_like(rhs)
        psi[:, self.j0:] = w / (self.sx[:, None] * self.sy[None, :])
        return psi

    def solve(self, rhs: np.ndarray, tol: float, max_refine: int = 6):
        scale = float(np.max(np.abs(rhs)))
        if scale == 0.0:
            return np.zeros_like(rhs), [0.0]
        rhs = rhs.copy()
        if self.symmetric_eta0:
            rhs[:, 0] = 0.0
        rhs[:, self.j0:] = self._project(rhs[:, self.j0:])
        psi = self._solve_once(rhs)
        history = []
        for _ in range(max_refine):
            r = self.stencil.residual(psi, rhs)
            r[:, :self.j0] = 0.0
            res = float(np.max(np.abs(r))) / scale
            history.append(res)
            if res <= tol:
                break
            psi += self._solve_once(r)
        else:
            raise EllipticConvergenceError(history[-1] * scale, tol * scale, max_refine)
        if not self.symmetric_eta0:
            psi = psi - psi[-1, -1]  # far-corner gauge for the all-Neumann case
        return psi, history


def solve_stream(omega1: np.ndarray, params: EllipticParams, grid: Grid,
                 psi0: np.ndarray | None = None) -> np.ndarray:
    """Solve A psi1 = omega1 to ||A psi - omega||_inf <= tol * ||omega||_inf."""
    _check_params(params)
    if not np.all(np.isfinite(omega1)):
        raise EllipticError("non-finite right-hand side")
    solver = params.solver
    if solver == "auto":
        solver = "fastdiag"
    if solver == "fastdiag":
        fd = _FastDiagSolver(grid, params.n, params.delta, params.symmetric_eta0)
        psi, _ = fd.solve(omega1, params.tol)
        return psi
    if solver == "multigrid":
        mg = _MultigridSolver(grid, params.n, params.delta, params.symmetric_eta0)
        psi, _ = mg.solve(omega1, psi0, params.tol, params.max_iter)
        return psi
    ax, ay = _levels(grid)[0]
    st = _Stencil(ax, ay, params.n, params.delta, params.symmetric_eta0)
    psi, _ = _cg_solve(st, omega1, psi0, params.tol, params.max_iter * 50)
    return psi


def solve_history(omega1: np.ndarray, params: EllipticParams, grid: Grid):
    """Like solve_stream but also returns the per-iteration residual history."""
    _check_params(params)
    mg = _MultigridSolver(grid, params.n, params.delta, params.symmetric_eta0)
    return mg.solve(omega1, None, params.tol, params.max_iter)


def apply_operator(psi1: np.ndarray, params: EllipticParams, grid: Grid) -> np.ndarray:
    """Apply the discrete A with the same stencils and closures as the solver.

    The constrained row (eta = 0 in the symmetric sector, or the gauge corner
    otherwise) is an identity row, matching the solved system.
    """
    _check_params(params)
    ax, ay = _levels(grid)[0]
    st = _Stencil(ax, ay, params.n, params.delta, params.symmetric_eta0)
    out = st.apply(psi1)
    if st.symmetric_eta0:
        out[:, 0] = psi1[:, 0]
    else:
        out[-1, -1] = psi1[-1, -1]
    return out


def operator_weight(params: EllipticParams, grid: Grid) -> np.ndarray:
    """The inner-product weight in which the discrete operator is self-adjoint."""
    ax, ay = _levels(grid)[0]
    st = _Stencil(ax, ay, params.n, params.delta, params.symmetric_eta0)
    return st.weight


# ---------------------------------------------------------------------------
# conservative flux-divergence helpers shared with the physics tendencies


def flux_div_xi(f: np.ndarray, grid: Grid, n_exp: float) -> np.ndarray:
    """(1/xi^q)(xi^q f_xi)_xi with zero-flux far face and even-symmetry axis.

    The axis row is the consistent (1+q) f_xixi limit when 1+q > 0 and junk
    otherwise (callers owning fields that vanish on the axis overwrite it).
    """
    ax = _levels(grid)[0][0]
    g, W = radial_flux_coeffs(ax, n_exp)
    flux = g[:, None] * (f[1:, :] - f[:-1, :])
    out = np.zeros_like(f)
    out[0, :] = flux[0, :] / W[0]
    out[1:-1, :] = (flux[1:, :] - flux[:-1, :]) / W[1:-1, None]
    out[-1, :] = -flux[-1, :] / W[-1]
    return out


def flux_div_eta(f: np.ndarray, grid: Grid) -> np.ndarray:
    """f_etaeta with zero-flux top face; the eta=0 row output is zeroed
    (odd fields have zero tendency there)."""
    ay = _levels(grid)[0][1]
    g, W = axial_flux_coeffs(ay, half_bottom=False)
    flux = g[None, :] * (f[:, 1:] - f[:, :-1])
    out = np.zeros_like(f)
    out[:, 1:-1] = (flux[:, 1:] - flux[:, :-1]) / W[None, 1:-1]
    out[:, -1] = -flux[:, -1] / W[-1]
    return out
