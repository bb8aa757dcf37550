"""Right-hand sides of the zoomed systems: velocity recovery, advection,
stretching/source terms, and diffusion with variant-dependent viscosity.

Only the physical terms live here (the F part of the split scheme); the
frame-drift and amplitude-control terms belong to the exact control step in
the scaling module. Derivatives are taken in the computational coordinate
with the analytic metric; parity ghosts close the axis and eta = 0 ends,
zero-gradient mirrors close the far field (homogeneous Neumann).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import StateError
from .fields import FieldSet
from .grid import Grid


@dataclass(frozen=True)
class DimensionParams:
    """Space dimension n (elliptic/diffusion) and m (velocity law)."""
    n: float
    m: float

    @staticmethod
    def for_variant(variant: str, n: float) -> "DimensionParams":
        if variant == "generalized-boussinesq":
            return DimensionParams(n=n, m=(n + 3.0) / 2.0)
        return DimensionParams(n=n, m=n)


@dataclass(frozen=True)
class EffectiveViscosity:
    nu_gamma_eff: float
    nu_omega_eff: float

    def __post_init__(self):
        if self.nu_gamma_eff < 0.0 or self.nu_omega_eff < 0.0:
            raise StateError("effective viscosities must be non-negative")


def effective_viscosity(cfg, scal) -> EffectiveViscosity:
    """Viscosity coefficients in front of the zoomed diffusion operators.

    The solution-dependent law collapses to the constant nu0 in this frame;
    the constant-viscosity variants carry the accumulated C_psi/C_lz factor.
    """
    if cfg.variant == "generalized-nse":
        return EffectiveViscosity(cfg.nu0, cfg.nu0)
    factor = scal.C_psi / scal.C_lz
    return EffectiveViscosity(cfg.nu1 * factor, cfg.nu2 * factor)


# ---------------------------------------------------------------------------
# derivatives


def _pad_xi(f: np.ndarray, parity: str, width: int) -> np.ndarray:
    sign = 1.0 if parity == "even" else -1.0
    left = sign * f[width:0:-1, :]
    right = f[-2:-2 - width:-1, :]
    return np.concatenate([left, f, right], axis=0)


def _pad_eta(f: np.ndarray, parity: str, width: int) -> np.ndarray:
    sign = 1.0 if parity == "even" else -1.0
    left = sign * f[:, width:0:-1]
    right = f[:, -2:-2 - width:-1]
    return np.concatenate([left, f, right], axis=1)


def d_xi(f: np.ndarray, grid: Grid, parity: str = "even") -> np.ndarray:
    """Centered second-order d/dxi on the mapped mesh."""
    p = _pad_xi(f, parity, 1)
    return (p[2:, :] - p[:-2, :]) / (2.0 * grid.hs_xi * grid.xi_s[:, None])


def d_eta(f: np.ndarray, grid: Grid, parity: str = "odd") -> np.ndarray:
    p = _pad_eta(f, parity, 1)
    return (p[:, 2:] - p[:, :-2]) / (2.0 * grid.hs_eta * grid.eta_s[None, :])


def d2_xi(f: np.ndarray, grid: Grid, parity: str = "even") -> np.ndarray:
    """Centered d^2/dxi^2 on the mapped mesh: (f_ss - (xi_ss/xi_s) f_s)/xi_s^2."""
    p = _pad_xi(f, parity, 1)
    hs = grid.hs_xi
    f_ss = (p[2:, :] - 2.0 * f + p[:-2, :]) / hs ** 2
    f_s = (p[2:, :] - p[:-2, :]) / (2.0 * hs)
    xs = grid.xi_s[:, None]
    return (f_ss - (grid.xi_ss[:, None] / xs) * f_s) / xs ** 2


def d2_eta(f: np.ndarray, grid: Grid, parity: str = "odd") -> np.ndarray:
    p = _pad_eta(f, parity, 1)
    hs = grid.hs_eta
    f_ss = (p[:, 2:] - 2.0 * f + p[:, :-2]) / hs ** 2
    f_s = (p[:, 2:] - p[:, :-2]) / (2.0 * hs)
    ys = grid.eta_s[None, :]
    return (f_ss - (grid.eta_ss[None, :] / ys) * f_s) / ys ** 2


def laplace_radial(f: np.ndarray, grid: Grid, n_coeff: float,
                   parity: str = "even") -> np.ndarray:
    """f_xixi + (n_coeff/xi) f_xi; the axis row carries the even-symmetry
    limit (1 + n_coeff) f_xixi(0)."""
    fxx = d2_xi(f, grid, parity=parity)
    fx = d_xi(f, grid, parity=parity)
    out = np.empty_like(f)
    out[1:, :] = fxx[1:, :] + n_coeff * fx[1:, :] / grid.xi[1:, None]
    out[0, :] = (1.0 + n_coeff) * fxx[0, :]
    return out


def _upwind_ds(p: np.ndarray, wind: np.ndarray, axis: int, hs: float) -> np.ndarray:
    """Third-order upwind-biased d/ds on a 5-point stencil (2 ghosts each side)."""
    if axis == 0:
        fm2, fm1, f0 = p[:-4, :], p[1:-3, :], p[2:-2, :]
        fp1, fp2 = p[3:-1, :], p[4:, :]
    else:
        fm2, fm1, f0 = p[:, :-4], p[:, 1:-3], p[:, 2:-2]
        fp1, fp2 = p[:, 3:-1], p[:, 4:]
    pos = (2.0 * fp1 + 3.0 * f0 - 6.0 * fm1 + fm2) / (6.0 * hs)
    neg = (-fp2 + 6.0 * fp1 - 3.0 * f0 - 2.0 * fm1) / (6.0 * hs)
    return np.where(wind >= 0.0, pos, neg)


def advect(f: np.ndarray, uxi: np.ndarray, ueta: np.ndarray, grid: Grid,
           parity_xi: str, parity_eta: str, scheme: str = "centered") -> np.ndarray:
    """- (u . grad f) with the configured advection stencil."""
    if scheme == "centered":
        fx = d_xi(f, grid, parity_xi)
        fy = d_eta(f, grid, parity_eta)
    elif scheme == "upwind":
        fx = _upwind_ds(_pad_xi(f, parity_xi, 2), uxi, 0, grid.hs_xi) \
            / grid.xi_s[:, None]
        fy = _upwind_ds(_pad_eta(f, parity_eta, 2), ueta, 1, grid.hs_eta) \
            / grid.eta_s[None, :]
    else:
        raise ValueError(f"unknown advection scheme {scheme!r}")
    return -(uxi * fx + ueta * fy)


# ---------------------------------------------------------------------------
# velocity recovery and incompressibility


def velocity(psi1: np.ndarray, dims: DimensionParams, grid: Grid):
    """Meridional velocity (u^xi, u^eta) from the stream function.

    u^xi = -xi psi_eta,  u^eta = (m-1) psi + xi psi_xi.
    """
    psi_eta = d_eta(psi1, grid, parity="odd")
    psi_xi = d_xi(psi1, grid, parity="even")
    uxi = -grid.xi[:, None] * psi_eta
    ueta = (dims.m - 1.0) * psi1 + grid.xi[:, None] * psi_xi
    return uxi, ueta


def weighted_divergence(uxi: np.ndarray, ueta: np.ndarray,
                        dims: DimensionParams, grid: Grid) -> np.ndarray:
    """(xi^{m-2} u^xi)_xi / xi^{m-2} + u^eta_eta (zero for exact fields)."""
    duxi = d_xi(uxi, grid, parity="odd")  # u^xi ~ -xi psi_eta is odd in xi
    term = np.empty_like(uxi)
    term[1:, :] = uxi[1:, :] / grid.xi[1:, None]
    term[0, :] = duxi[0, :]
    return duxi + (dims.m - 2.0) * term + d_eta(ueta, grid, parity="even")


# ---------------------------------------------------------------------------
# tendencies (F parts)


def gamma_diffusion(gamma: np.ndarray, u1: np.ndarray, dims: DimensionParams,
                    delta: float, grid: Grid) -> np.ndarray:
    """delta^2 [G_xixi + (n-4)/xi G_xi + (6-2n)/xi^2 G] + G_etaeta.

    The 1/xi^2 term is evaluated through u1 = gamma/xi^2 (axis safe); the
    axis row is exactly zero by the analytic cancellation for gamma ~ xi^2.
    """
    n = dims.n
    out = delta * delta * (laplace_radial(gamma, grid, n - 4.0, parity="even")
                           + (6.0 - 2.0 * n) * u1) \
        + d2_eta(gamma, grid, parity="odd")
    out[0, :] = 0.0
    return out


def omega_diffusion(omega1: np.ndarray, dims: DimensionParams,
                    delta: float, grid: Grid,
                    parity_eta: str = "odd") -> np.ndarray:
    """delta^2 [w_xixi + (n/xi) w_xi] + w_etaeta with the even-axis closure."""
    return delta * delta * laplace_radial(omega1, grid, dims.n, parity="even") \
        + d2_eta(omega1, grid, parity=parity_eta)


def tendency_gamma(fields: FieldSet, scal, cfg, grid: Grid) -> np.ndarray:
    """F part of the gamma equation: advection + diffusion (no control terms)."""
    nu = effective_viscosity(cfg, scal).nu_gamma_eff
    dims = DimensionParams.for_variant(cfg.variant, scal.n)
    out = advect(fields.gamma, fields.uxi, fields.ueta, grid,
                 parity_xi="even", parity_eta="odd", scheme=cfg.advection)
    if nu > 0.0:
        out += nu * gamma_diffusion(fields.gamma, fields.u1, dims, scal.delta, grid)
    out[:, 0] = 0.0
    out[0, :] = 0.0
    _check_finite(out, "gamma tendency")
    return out


def tendency_omega(fields: FieldSet, scal, cfg, grid: Grid) -> np.ndarray:
    """F part of the omega1 equation: advection + (u1^2)_eta source
    [+ (3-n) psi_eta omega1 outside the boussinesq variant] + diffusion."""
    nu = effective_viscosity(cfg, scal).nu_omega_eff
    dims = DimensionParams.for_variant(cfg.variant, scal.n)
    out = advect(fields.omega1, fields.uxi, fields.ueta, grid,
                 parity_xi="even", parity_eta="odd", scheme=cfg.advection)
    out += d_eta(fields.u1 * fields.u1, grid, parity="even")
    if cfg.variant != "generalized-boussinesq":
        psi_eta = d_eta(fields.psi1, grid, parity="odd")
        out += (3.0 - dims.n) * psi_eta * fields.omega1
    if nu > 0.0:
        out += nu * omega_diffusion(fields.omega1, dims, scal.delta, grid)
    out[:, 0] = 0.0
    _check_finite(out, "omega tendency")
    return out


def tendency_u1(fields: FieldSet, scal, cfg, grid: Grid) -> np.ndarray:
    """F part of the swirl equation in u1 form (classic formulation):
    -u.grad u1 + 2 u1 psi_eta + nu [u1_xixi + (n/xi) u1_xi + u1_etaeta]."""
    nu = effective_viscosity(cfg, scal).nu_gamma_eff
    dims = DimensionParams.for_variant(cfg.variant, scal.n)
    psi_eta = d_eta(fields.psi1, grid, parity="odd")
    out = advect(fields.u1, fields.uxi, fields.ueta, grid,
                 parity_xi="even", parity_eta="odd", scheme=cfg.advection)
    out += 2.0 * fields.u1 * psi_eta
    if nu > 0.0:
        out += nu * omega_diffusion(fields.u1, dims, scal.delta, grid)
    out[:, 0] = 0.0
    _check_finite(out, "u1 tendency")
    return out


def _check_finite(arr: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(arr)):
        from .errors import NumericalBlowupError
        bad = np.argwhere(~np.isfinite(arr))
        raise NumericalBlowupError(f"non-finite {what}", where=tuple(bad[0]))


# ---------------------------------------------------------------------------
# energy functionals


def energy(fields: FieldSet, dims: DimensionParams, cfg, grid: Grid,
           nu_pair: tuple[float, float] | None = None):
    """(E, D): the conserved energy and its dissipation functional.

    E = int (u1^2 + w |grad psi1|^2) xi^n,  w = (7-n)/4 for the boussinesq
    variant (requires n < 7) and 1 otherwise;
    D = nu_gamma int |grad u1|^2 xi^n + nu_omega w int omega1^2 xi^n.
    """
    if cfg.variant == "generalized-boussinesq":
        if dims.n >= 7.0:
            raise StateError(f"energy weight (7-n)/4 needs n < 7, got n = {dims.n}")
        w_grad = (7.0 - dims.n) / 4.0
    else:
        w_grad = 1.0
    quad = grid.quad_weights(weight_exp=dims.n)
    px = d_xi(fields.psi1, grid, parity="even")
    pe = d_eta(fields.psi1, grid, parity="odd")
    E = float(np.sum((fields.u1 ** 2 + w_grad * (px ** 2 + pe ** 2)) * quad))
    if nu_pair is None:
        nu_pair = cfg.viscosities()
    ux = d_xi(fields.u1, grid, parity="even")
    ue = d_eta(fields.u1, grid, parity="odd")
    D = float(np.sum((nu_pair[0] * (ux ** 2 + ue ** 2)
                      + nu_pair[1] * w_grad * fields.omega1 ** 2) * quad))
    return E, D
