"""Tensor-product mesh in the zoomed coordinates (xi, eta).

The mesh is defined by two one-dimensional maps from a uniform computational
coordinate s in [0, 1] to the physical coordinate. Two map families are
supported:

  uniform:        x(s) = A * s
  tanh-stretched: x(s) = A * (1 - tanh(beta*(1-s)) / tanh(beta))

The tanh map clusters nodes near x = 0 (axis and peak region) and coarsens
toward the far field; beta -> 0 degenerates to the uniform map.

Maps can be "anchored": the extent A is snapped by a relative factor so that a
requested coordinate (the controller's pinning point) falls exactly on a mesh
node. All interpolation is tensor-product piecewise-cubic (4-point Lagrange),
with parity-aware ghost values across x = 0 and a configurable far-field
extension beyond the last node.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError, StateError

_EXPAND_EXP = -0.2  # extents follow R**(-1/5), Z**(-1/5)


@dataclass(frozen=True)
class MeshMap:
    """Monotone map s in [0,1] -> x in [0, extent]."""

    kind: str  # "uniform" | "tanh"
    extent: float
    beta: float = 0.0

    def __post_init__(self):
        if self.extent <= 0.0 or not math.isfinite(self.extent):
            raise ConfigError(f"mesh extent must be positive, got {self.extent}")
        if self.kind not in ("uniform", "tanh"):
            raise ConfigError(f"unknown map kind {self.kind!r}")
        if self.beta < 0.0 or not math.isfinite(self.beta):
            raise ConfigError(f"stretch strength must be >= 0, got {self.beta}")

    @property
    def _is_uniform(self) -> bool:
        return self.kind == "uniform" or self.beta < 1e-12

    def value(self, s):
        s = np.asarray(s, dtype=float)
        if self._is_uniform:
            return self.extent * s
        b = self.beta
        return self.extent * (1.0 - np.tanh(b * (1.0 - s)) / math.tanh(b))

    def deriv(self, s):
        s = np.asarray(s, dtype=float)
        if self._is_uniform:
            return np.full_like(s, self.extent)
        b = self.beta
        return self.extent * b / (np.cosh(b * (1.0 - s)) ** 2 * math.tanh(b))

    def deriv2(self, s):
        s = np.asarray(s, dtype=float)
        if self._is_uniform:
            return np.zeros_like(s)
        b = self.beta
        u = b * (1.0 - s)
        return self.extent * 2.0 * b * b * np.tanh(u) \
            / (np.cosh(u) ** 2 * math.tanh(b))

    def inverse(self, x):
        x = np.asarray(x, dtype=float)
        if self._is_uniform:
            return x / self.extent
        b = self.beta
        arg = (1.0 - x / self.extent) * math.tanh(b)
        return 1.0 - np.arctanh(arg) / b


def _anchored_map(kind: str, extent: float, beta: float, n: int,
                  anchor: float | None) -> MeshMap:
    """Build a map, rescaling the extent so `anchor` lands exactly on a node."""
    m = MeshMap(kind, extent, beta)
    if anchor is None:
        return m
    if not 0.0 < anchor < extent:
        raise ConfigError(
            f"anchor {anchor} outside mesh extent (0, {extent})")
    s_star = float(m.inverse(anchor))
    k = int(round(s_star * n))
    k = min(max(k, 3), n - 3)  # keep cubic stencils one-sided-free around it
    # x(k/n) = anchor  =>  rescale extent by anchor / x(k/n)
    factor = anchor / float(m.value(k / n))
    return MeshMap(kind, extent * factor, beta)


def _solve_beta_for_core_spacing(extent: float, n: int, target_dx0: float,
                                 beta_lo: float = 1e-6,
                                 beta_hi: float = 12.0) -> float:
    """Find beta so the tanh map's first cell width matches target_dx0."""
    if target_dx0 <= 0:
        raise ConfigError("core spacing target must be positive")
    uniform_dx0 = extent / n
    if target_dx0 >= uniform_dx0:
        return 0.0  # uniform already at least this fine near the axis

    def dx0(beta):
        m = MeshMap("tanh", extent, beta)
        return float(m.value(1.0 / n))

    if dx0(beta_hi) > target_dx0:
        return beta_hi  # cap: accept the strongest allowed stretching
    for _ in range(200):
        mid = 0.5 * (beta_lo + beta_hi)
        if dx0(mid) > target_dx0:
            beta_lo = mid
        else:
            beta_hi = mid
    return 0.5 * (beta_lo + beta_hi)


@dataclass(frozen=True, eq=False)
class Grid:
    """Immutable tensor-product mesh with metric terms.

    Nodes include both boundaries: xi has nxi+1 nodes, eta has neta+1. Field
    arrays are indexed [i, j] with i along xi and j along eta (eta fastest in
    memory for C-ordered arrays).
    """

    nxi: int
    neta: int
    xi_map: MeshMap
    eta_map: MeshMap
    xi: np.ndarray          # (nxi+1,) node coordinates
    eta: np.ndarray         # (neta+1,)
    xi_s: np.ndarray        # d xi / d s at nodes
    eta_s: np.ndarray
    xi_ss: np.ndarray       # d^2 xi / d s^2 at nodes
    eta_ss: np.ndarray
    xi_half: np.ndarray     # xi at half nodes s_{i+1/2}, (nxi,)
    eta_half: np.ndarray
    xi_s_half: np.ndarray
    eta_s_half: np.ndarray
    wxi: np.ndarray         # trapezoid quadrature weights on xi nodes
    weta: np.ndarray
    anchor_xi: float | None    # pinning coordinate guaranteed to be a node
    anchor_eta: float | None
    i_anchor: int | None       # node indices of the anchors
    j_anchor: int | None
    base_xi: float             # configured base extents for the expansion law
    base_eta: float
    core_dxi: float | None     # near-axis spacing preserved across rebuilds

    @property
    def xi_max(self) -> float:
        return float(self.xi[-1])

    @property
    def eta_max(self) -> float:
        return float(self.eta[-1])

    @property
    def map_kind(self) -> str:
        return self.xi_map.kind

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nxi + 1, self.neta + 1)

    @property
    def hs_xi(self) -> float:
        return 1.0 / self.nxi

    @property
    def hs_eta(self) -> float:
        return 1.0 / self.neta

    def local_dxi(self) -> np.ndarray:
        """Representative local xi spacing per node (min of adjacent cells)."""
        d = np.diff(self.xi)
        out = np.empty_like(self.xi)
        out[0] = d[0]
        out[-1] = d[-1]
        out[1:-1] = np.minimum(d[:-1], d[1:])
        return out

    def local_deta(self) -> np.ndarray:
        d = np.diff(self.eta)
        out = np.empty_like(self.eta)
        out[0] = d[0]
        out[-1] = d[-1]
        out[1:-1] = np.minimum(d[:-1], d[1:])
        return out

    def quad_weights(self, weight_exp: float = 0.0) -> np.ndarray:
        """2-D trapezoid weights, optionally carrying a xi**weight_exp factor."""
        wx = self.wxi if weight_exp == 0.0 else self.wxi * self.xi ** weight_exp
        return np.outer(wx, self.weta)


def _node_geometry(m: MeshMap, n: int):
    s = np.linspace(0.0, 1.0, n + 1)
    s_half = (s[:-1] + s[1:]) / 2.0
    x = m.value(s)
    x[0] = 0.0
    xs = m.deriv(s)
    if np.any(np.diff(x) <= 0.0):
        raise ConfigError("mesh map produced non-increasing nodes")
    if np.any(xs <= 0.0):
        raise ConfigError("mesh map metric is not strictly positive")
    w = np.empty(n + 1)
    w[1:-1] = (x[2:] - x[:-2]) / 2.0
    w[0] = (x[1] - x[0]) / 2.0
    w[-1] = (x[-1] - x[-2]) / 2.0
    return x, xs, m.deriv2(s), m.value(s_half), m.deriv(s_half), w


def make_grid(nxi: int, neta: int, xi_extent: float, eta_extent: float,
              map_kind: str = "uniform", stretch: float = 0.0,
              anchor_xi: float | None = None, anchor_eta: float | None = None,
              base_xi: float | None = None, base_eta: float | None = None,
              core_dxi: float | None = None, snap: bool = True) -> Grid:
    """Build a mesh; with snap=False the extents are taken verbatim (used to
    reconstruct a previously snapped grid bit-identically from a snapshot)."""
    if nxi < 16 or neta < 16:
        raise ConfigError(f"need at least 16 cells per direction, got {nxi}x{neta}")
    beta = stretch if map_kind == "tanh" else 0.0
    if snap and map_kind == "tanh" and core_dxi is not None:
        beta = _solve_beta_for_core_spacing(xi_extent, nxi, core_dxi)
    if snap:
        xi_map = _anchored_map(map_kind, xi_extent, beta, nxi, anchor_xi)
        eta_map = _anchored_map(map_kind, eta_extent, beta, neta, anchor_eta)
    else:
        xi_map = MeshMap(map_kind, xi_extent, beta)
        eta_map = MeshMap(map_kind, eta_extent, beta)

    xi, xi_s, xi_ss, xi_h, xi_sh, wxi = _node_geometry(xi_map, nxi)
    eta, eta_s, eta_ss, eta_h, eta_sh, weta = _node_geometry(eta_map, neta)

    tol = 1e-12 if snap else 1e-9
    i_anchor = j_anchor = None
    if anchor_xi is not None:
        i_anchor = int(np.argmin(np.abs(xi - anchor_xi)))
        if not math.isclose(xi[i_anchor], anchor_xi, rel_tol=tol, abs_tol=tol):
            raise ConfigError("anchor snapping failed in xi")
    if anchor_eta is not None:
        j_anchor = int(np.argmin(np.abs(eta - anchor_eta)))
        if not math.isclose(eta[j_anchor], anchor_eta, rel_tol=tol, abs_tol=tol):
            raise ConfigError("anchor snapping failed in eta")

    return Grid(
        nxi=nxi, neta=neta, xi_map=xi_map, eta_map=eta_map,
        xi=xi, eta=eta, xi_s=xi_s, eta_s=eta_s, xi_ss=xi_ss, eta_ss=eta_ss,
        xi_half=xi_h, eta_half=eta_h, xi_s_half=xi_sh, eta_s_half=eta_sh,
        wxi=wxi, weta=weta,
        anchor_xi=anchor_xi, anchor_eta=anchor_eta,
        i_anchor=i_anchor, j_anchor=j_anchor,
        base_xi=base_xi if base_xi is not None else xi_extent,
        base_eta=base_eta if base_eta is not None else eta_extent,
        core_dxi=core_dxi,
    )


def build_grid(config) -> Grid:
    """Build the run mesh from a ModelConfig."""
    g = config.grid
    anchor_xi = config.R0 if g.anchor else None
    anchor_eta = 1.0 if g.anchor else None
    core = None
    if g.map_kind == "tanh" and g.fix_core_spacing:
        probe = MeshMap("tanh", g.xi_max, g.stretch)
        core = float(probe.value(1.0 / g.nxi))
    return make_grid(g.nxi, g.neta, g.xi_max, g.eta_max,
                     map_kind=g.map_kind, stretch=g.stretch,
                     anchor_xi=anchor_xi, anchor_eta=anchor_eta,
                     core_dxi=core)


def expand_domain(grid: Grid, R: float, Z: float) -> Grid:
    """New grid with extents base * R**(-1/5), base * Z**(-1/5).

    (R, Z) is the physical peak location recovered through the accumulated
    zoom factors; as it collapses toward the origin the frame widens.
    """
    if not (R > 0.0 and Z > 0.0):
        raise StateError(f"domain expansion needs positive (R, Z), got ({R}, {Z})")
    new_xi = grid.base_xi * R ** _EXPAND_EXP
    new_eta = grid.base_eta * Z ** _EXPAND_EXP
    return make_grid(grid.nxi, grid.neta, new_xi, new_eta,
                     map_kind=grid.xi_map.kind, stretch=grid.xi_map.beta,
                     anchor_xi=grid.anchor_xi, anchor_eta=grid.anchor_eta,
                     base_xi=grid.base_xi, base_eta=grid.base_eta,
                     core_dxi=grid.core_dxi)


# ---------------------------------------------------------------------------
# piecewise-cubic tensor-product interpolation


def interp_weights(nodes: np.ndarray, targets: np.ndarray):
    """4-point Lagrange weights for each target on a non-uniform node set.

    The stencil is the centered 4-node set around the target's cell, falling
    back to one-sided stencils in the first and last cells (still exact for
    cubics). Targets beyond the last node are flagged in `outside` and get
    zero weights; the caller applies the far-field extension. Returns
    (idx, wts, outside) with idx, wts shaped (len(targets), 4).
    """
    x = np.asarray(nodes, dtype=float)
    t = np.asarray(targets, dtype=float)
    n = x.size - 1

    outside = t > x[-1] * (1.0 + 1e-14)
    tc = np.minimum(t, x[-1])
    cell = np.searchsorted(x, tc, side="right") - 1
    cell = np.clip(cell, 0, n - 1)
    st = np.clip(cell - 1, 0, n - 3)  # stencil nodes st .. st+3
    idx = st[:, None] + np.arange(4)[None, :]
    pos = x[idx]

    w = np.ones_like(pos)
    for k in range(4):
        for m in range(4):
            if m == k:
                continue
            w[:, k] *= (tc - pos[:, m]) / (pos[:, k] - pos[:, m])
    w[outside] = 0.0
    return idx, w, outside


def _apply_along_xi(field, idx, wts, outside, extension):
    out = (wts[:, 0, None] * field[idx[:, 0], :]
           + wts[:, 1, None] * field[idx[:, 1], :]
           + wts[:, 2, None] * field[idx[:, 2], :]
           + wts[:, 3, None] * field[idx[:, 3], :])
    if np.any(outside):
        out[outside, :] = field[-1, :][None, :] if extension == "const" else 0.0
    return out


def _apply_along_eta(field, idx, wts, outside, extension):
    out = (field[:, idx[:, 0]] * wts[None, :, 0]
           + field[:, idx[:, 1]] * wts[None, :, 1]
           + field[:, idx[:, 2]] * wts[None, :, 2]
           + field[:, idx[:, 3]] * wts[None, :, 3])
    if np.any(outside):
        if extension == "const":
            out[:, outside] = field[:, -1][:, None]
        else:
            out[:, outside] = 0.0
    return out


def resample(field: np.ndarray, grid: Grid, xi_targets, eta_targets,
             extension: str = "zero") -> np.ndarray:
    """Evaluate the tensor-cubic interpolant of `field` on a target grid."""
    if extension not in ("const", "zero"):
        raise ValueError(f"extension must be 'const' or 'zero', got {extension!r}")
    ix, wx, ox = interp_weights(grid.xi, xi_targets)
    iy, wy, oy = interp_weights(grid.eta, eta_targets)
    out = _apply_along_xi(field, ix, wx, ox, extension)
    return _apply_along_eta(out, iy, wy, oy, extension)


def regrid_field(field: np.ndarray, src: Grid, dst: Grid,
                 extension: str = "zero") -> np.ndarray:
    """Transfer a field from `src` nodes onto `dst` nodes."""
    if field.shape != src.shape:
        raise ValueError(f"field shape {field.shape} does not match src {src.shape}")
    return resample(field, src, dst.xi, dst.eta, extension=extension)


def sample_at(field: np.ndarray, grid: Grid, xi_pts, eta_pts) -> np.ndarray:
    """Cubic point samples of `field` at scattered (xi, eta) pairs.

    Points beyond the far boundaries evaluate to zero (decaying fields);
    callers that care about domain exit test the coordinates themselves.
    """
    xi_pts = np.atleast_1d(np.asarray(xi_pts, dtype=float))
    eta_pts = np.atleast_1d(np.asarray(eta_pts, dtype=float))
    ix, wx, ox = interp_weights(grid.xi, xi_pts)
    iy, wy, oy = interp_weights(grid.eta, eta_pts)
    vals = np.zeros(xi_pts.size)
    for a in range(4):
        for b in range(4):
            vals += wx[:, a] * wy[:, b] * field[ix[:, a], iy[:, b]]
    vals[ox | oy] = 0.0
    return vals
