"""Dynamic zoom controller: scaling rates and factors, the exact closed-form
control step, dimension-law updates, and blowup-rate inversion.

Conventions. Amplitude factors grow as C = exp(+int c); length factors shrink
as C_l = exp(-int c_l). The physical peak location is (C_lr * R, C_lz * Z)
with (R, Z) the tracked location in zoomed coordinates ((R0, 1) after every
control step). The rate identities

    c_psi = c_u + c_lz,  c_omega = c_u - c_lz,  c_gamma = c_u + 2 c_lr

translate to per-step multipliers K_psi = K_u / K_lz, K_omega = K_u * K_lz,
K_gamma = K_u / K_lr**2 when coordinates are resampled as v(K_lr xi, K_lz eta).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
import scipy.optimize

from .errors import (DataError, DegenerateScalingError,
                     ExtremumAtBoundaryError, NoStrictMaximumError, StateError)
from .fields import FieldSet, enforce_symmetry, gamma_from_u1, u1_from_gamma
from .grid import Grid, resample, sample_at
from .physics import DimensionParams

_RATE_TOL = 1e-14


@dataclass
class ScalingState:
    tau: float = 0.0
    t_phys: float = 0.0
    c_lr: float = 0.0
    c_lz: float = 0.0
    c_u: float = 0.0
    c_psi: float = 0.0
    c_omega: float = 0.0
    c_gamma: float = 0.0
    C_lr: float = 1.0
    C_lz: float = 1.0
    C_u: float = 1.0
    C_psi: float = 1.0
    C_omega: float = 1.0
    delta: float = 1.0
    n: float = 3.0
    m: float = 3.0
    R: float = 0.0       # peak of u1 in zoomed coordinates
    Z: float = 0.0
    Romega: float = 0.0  # peak of omega1 (tracked, not controlled)
    Zomega: float = 0.0
    u1_max: float = 1.0

    @property
    def R_phys(self) -> float:
        return self.C_lr * self.R

    @property
    def Z_phys(self) -> float:
        return self.C_lz * self.Z

    def clone(self) -> "ScalingState":
        return replace(self)

    def rate_identity_errors(self) -> tuple[float, float, float]:
        return (abs(self.c_psi - (self.c_u + self.c_lz)),
                abs(self.c_omega - (self.c_u - self.c_lz)),
                abs(self.c_gamma - (self.c_u + 2.0 * self.c_lr)))


def locate_extremum(fld: np.ndarray, grid: Grid, window=None):
    """Subgrid peak of a field by a quadratic fit around the grid argmax.

    Returns (R, Z, value). Raises if the grid maximum touches the boundary
    (or the tracking window edge) or the local fit has no strict maximum.
    `window` = (xi_lo, xi_hi, eta_lo, eta_hi) restricts the search to the
    tracked peak's neighbourhood so a competing local maximum elsewhere
    cannot hijack the controller.
    """
    if not np.all(np.isfinite(fld)):
        raise StateError("cannot locate extremum of a non-finite field")
    if np.max(fld) == np.min(fld):
        raise NoStrictMaximumError("field is constant")
    search = fld
    if window is not None:
        xi_lo, xi_hi, eta_lo, eta_hi = window
        mask = ((grid.xi[:, None] >= xi_lo) & (grid.xi[:, None] <= xi_hi)
                & (grid.eta[None, :] >= eta_lo) & (grid.eta[None, :] <= eta_hi))
        if np.count_nonzero(mask) < 9:
            raise StateError("tracking window contains too few nodes")
        search = np.where(mask, fld, -np.inf)
    i, j = np.unravel_index(int(np.argmax(search)), fld.shape)
    ni, nj = fld.shape
    edge = (i in (0, ni - 1) or j in (0, nj - 1))
    if window is not None and not edge:
        edge = (not np.isfinite(search[i - 1, j]) or not np.isfinite(search[i + 1, j])
                or not np.isfinite(search[i, j - 1]) or not np.isfinite(search[i, j + 1]))
    if edge:
        raise ExtremumAtBoundaryError(
            f"grid maximum at boundary node ({i}, {j}); domain too small or "
            "the tracked peak left the frame")

    x = grid.xi[i - 1:i + 2] - grid.xi[i]
    y = grid.eta[j - 1:j + 2] - grid.eta[j]
    X, Y = np.meshgrid(x, y, indexing="ij")
    # quadratic f0 + d x + e y + a x^2 + b y^2 + c x y, least squares on 3x3
    A = np.column_stack([np.ones(9), X.ravel(), Y.ravel(),
                         X.ravel() ** 2, Y.ravel() ** 2, (X * Y).ravel()])
    coef, *_ = np.linalg.lstsq(A, fld[i - 1:i + 2, j - 1:j + 2].ravel(), rcond=None)
    f0, d, e, a, b, c = coef
    det = 4.0 * a * b - c * c
    if not (a < 0.0 and det > 0.0):
        raise NoStrictMaximumError("local quadratic fit is not concave")
    dx = (-2.0 * b * d + c * e) / det
    dy = (-2.0 * a * e + c * d) / det
    # keep the refinement inside the 3x3 patch
    dx = float(np.clip(dx, x[0], x[2]))
    dy = float(np.clip(dy, y[0], y[2]))
    value = float(f0 + d * dx + e * dy + a * dx * dx + b * dy * dy + c * dx * dy)
    return float(grid.xi[i] + dx), float(grid.eta[j] + dy), value


def track_omega_peak(omega1: np.ndarray, grid: Grid):
    """(R_omega, Z_omega) of |omega1|; falls back to the grid argmax when the
    subgrid fit is unavailable (peak near a boundary)."""
    mag = np.abs(omega1)
    try:
        r, z, _ = locate_extremum(mag, grid)
        return r, z
    except (ExtremumAtBoundaryError, NoStrictMaximumError):
        i, j = np.unravel_index(int(np.argmax(mag)), mag.shape)
        return float(grid.xi[i]), float(grid.eta[j])


def apply_zoom(fields: FieldSet, grid: Grid, K_lr: float, K_lz: float,
               K_u: float, classic: bool = False) -> FieldSet:
    """Closed-form control-flow solution: v(xi, eta) <- K_v v(K_lr xi, K_lz eta)
    with the field multipliers implied by the rate identities."""
    xi_t = K_lr * grid.xi
    eta_t = K_lz * grid.eta
    new = fields.clone()
    new.omega1 = (K_u * K_lz) * resample(fields.omega1, grid, xi_t, eta_t,
                                         extension="zero")
    new.psi1 = (K_u / K_lz) * resample(fields.psi1, grid, xi_t, eta_t,
                                       extension="zero")
    if classic:
        new.u1 = K_u * resample(fields.u1, grid, xi_t, eta_t, extension="zero")
        new.gamma = gamma_from_u1(new.u1, grid)
    else:
        new.gamma = (K_u / K_lr ** 2) * resample(fields.gamma, grid, xi_t, eta_t,
                                                 extension="const")
        new.u1 = u1_from_gamma(new.gamma, grid)
    enforce_symmetry(new)
    return new


def normalization_step(fields: FieldSet, scal: ScalingState, cfg, grid: Grid,
                       dtau: float) -> tuple[FieldSet, ScalingState]:
    """Exact control step: resample so the u1 peak sits at (R0, 1) with value 1.

    The coordinates are rescaled by K_lr = R*/R0, K_lz = Z* and the amplitude
    by K_u = 1/M*, where M* is the interpolated peak value taken through the
    same tensor-cubic interpolant used for the resampling; the normalization
    then holds exactly at the anchor node. Instantaneous rates are recovered
    as log-factors over dtau (left untouched when dtau == 0, e.g. for the
    initial normalization that seeds the frame).
    """
    if grid.i_anchor is None or grid.j_anchor is None:
        raise StateError("control step needs a grid anchored at (R0, 1)")
    R0 = grid.anchor_xi
    window = None
    w = getattr(cfg, "track_window", 0.0)
    if w and w > 1.0 and scal.R > 0.0 and scal.Z > 0.0:
        # follow the peak being pinned; a competing maximum elsewhere (for
        # instance core spin-up on the axis) must not hijack the frame
        window = (scal.R / w, scal.R * w, scal.Z / w, scal.Z * w)
    R_star, Z_star, _ = locate_extremum(fields.u1, grid, window=window)

    classic = cfg.variant == "classic-nse-u1"
    if classic:
        M = float(sample_at(fields.u1, grid, R_star, Z_star)[0])
    else:
        M = float(sample_at(fields.gamma, grid, R_star, Z_star)[0]) / R_star ** 2
    if not M > 0.0:
        raise StateError(f"peak value must be positive, got {M}")

    K_lr = R_star / R0
    K_lz = Z_star / 1.0
    K_u = 1.0 / M
    if dtau > 0.0 and max(abs(math.log(K_lr)), abs(math.log(K_lz)),
                          abs(math.log(K_u))) > 0.7:
        raise StateError(
            f"controller lost the peak: per-step factors (K_lr, K_lz, K_u) = "
            f"({K_lr:.3g}, {K_lz:.3g}, {K_u:.3g}) imply a >2x jump in one step")
    new = apply_zoom(fields, grid, K_lr, K_lz, K_u, classic=classic)

    out = scal.clone()
    out.C_lr *= K_lr
    out.C_lz *= K_lz
    out.C_u *= K_u
    out.C_psi *= K_u / K_lz
    out.C_omega *= K_u * K_lz
    out.delta = out.C_lz / out.C_lr
    if dtau > 0.0:
        out.c_u = math.log(K_u) / dtau
        out.c_lr = -math.log(K_lr) / dtau
        out.c_lz = -math.log(K_lz) / dtau
        out.c_psi = out.c_u + out.c_lz
        out.c_omega = out.c_u - out.c_lz
        out.c_gamma = out.c_u + 2.0 * out.c_lr
    out.R, out.Z = float(R0), 1.0
    out.u1_max = float(new.u1[grid.i_anchor, grid.j_anchor])
    out.Romega, out.Zomega = track_omega_peak(new.omega1, grid)
    return new, out


def update_dimension(R: float, Z: float, cfg) -> DimensionParams:
    """Dimension law from the physical peak location.

    nse-law: n = 1 + 2 R/Z (m = n); boussinesq-law: n = 4 R/Z - 1 with
    m = 1 + 2 R/Z = (n+3)/2; fixed: the configured constant.
    """
    if cfg.dimension_law == "fixed":
        return DimensionParams.for_variant(cfg.variant, cfg.n_fixed)
    if not (R > 0.0 and Z > 0.0):
        raise StateError(f"dimension law needs positive (R, Z), got ({R}, {Z})")
    ratio = R / Z
    if cfg.dimension_law == "nse-law":
        return DimensionParams(n=1.0 + 2.0 * ratio, m=1.0 + 2.0 * ratio)
    n = 4.0 * ratio - 1.0
    if n >= 7.0:
        raise StateError(f"boussinesq dimension law left its domain: n = {n} >= 7")
    return DimensionParams(n=n, m=1.0 + 2.0 * ratio)


@dataclass(frozen=True)
class NormalizedExponents:
    chat_lz: float
    chat_lr: float
    chat_omega: float
    chat_psi: float
    chat_u: float


def normalized_exponents(scal) -> NormalizedExponents:
    """Blowup exponents normalized by c_lz - c_psi (the 1/(T-t) time unit)."""
    denom = scal.c_lz - scal.c_psi
    if denom == 0.0:
        raise DegenerateScalingError(
            "c_lz == c_psi: the zoomed time does not compress toward a "
            "finite blowup time")
    chat_lz = scal.c_lz / denom
    return NormalizedExponents(
        chat_lz=chat_lz,
        chat_lr=scal.c_lr / denom,
        chat_omega=-1.0 - chat_lz,
        chat_psi=-1.0 + chat_lz,
        chat_u=-1.0,
    )


@dataclass
class BlowupFit:
    T: float                   # fitted blowup time
    c0: float                  # tau = c0 * log(1/(T - t)) time constant
    epsilon: float             # slope of C_psi/C_lz ~ 1 + eps * tau
    tau: np.ndarray            # fit window
    chat_lz: np.ndarray        # normalized exponent series over the window
    chat_lr: np.ndarray


def fit_blowup(history, window_frac: float = 0.5) -> BlowupFit:
    """Invert the zoomed time to the physical blowup time.

    Fits t(tau) = T - A exp(-(c_lz - c_psi) tau) over the late-time window
    and the factor ratio C_psi/C_lz to 1 + eps * tau.
    """
    tau = np.asarray(history.tau, dtype=float)
    t = np.asarray(history.t_phys, dtype=float)
    if tau.size < 8:
        raise DataError("history too short for a blowup fit")
    if np.any(np.diff(t) < 0.0):
        raise DataError("t_phys is not monotone")
    c_lz = np.asarray(history.c_lz, dtype=float)
    c_psi = np.asarray(history.c_psi, dtype=float)

    lo = int(tau.size * (1.0 - window_frac))
    tw, tpw = tau[lo:], t[lo:]
    k0 = float(np.mean(c_lz[lo:] - c_psi[lo:]))
    if k0 <= 0.0:
        raise DataError("rates do not compress time (c_lz - c_psi <= 0)")

    def model(x, T, A, k):
        return T - A * np.exp(-k * x)

    # linear in (T, A) at fixed k gives the starting point
    E = np.exp(-k0 * tw)
    M = np.column_stack([np.ones_like(tw), -E])
    (T0, A0), *_ = np.linalg.lstsq(M, tpw, rcond=None)
    popt, _ = scipy.optimize.curve_fit(model, tw, tpw, p0=[T0, A0, k0],
                                       maxfev=20000)
    T, _, k = popt

    ratio = np.asarray(history.C_psi, dtype=float)[lo:] \
        / np.asarray(history.C_lz, dtype=float)[lo:]
    eps = float(np.polyfit(tw, ratio, 1)[0])

    denom = c_lz[lo:] - c_psi[lo:]
    with np.errstate(divide="ignore", invalid="ignore"):
        chat_lz = np.where(denom != 0.0, c_lz[lo:] / denom, np.nan)
        chat_lr = np.where(denom != 0.0,
                           np.asarray(history.c_lr, dtype=float)[lo:] / denom,
                           np.nan)
    return BlowupFit(T=float(T), c0=1.0 / float(k), epsilon=eps,
                     tau=tw, chat_lz=chat_lz, chat_lr=chat_lr)
