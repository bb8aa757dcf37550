"""Every scalar and field diagnostic used to argue blowup: the max-vorticity
time integral, generalized enstrophy, velocity space-time norms, the critical
L^n norm, the weighted-circulation bound, r-weighted velocities, alignment
and stretching/diffusion ratios, pressure, steady-profile residual,
streamlines, and profile self-similarity.

Physical-frame quantities are reconstructed from the zoomed fields through
the accumulated factors:

    u1_phys   = u1 / C_u                    omega1_phys = omega1 / C_omega
    |omega|   = W / C_u                     |u|         = U / C_psi
    r         = C_lr xi,  z = C_lz eta      dt          = C_psi C_lz dtau

with W, U the zoomed vorticity/speed magnitudes assembled below (the factor
C_psi C_lz equals C_u, so the max-vorticity time integral in zoomed time has
integrand max W)."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.integrate

from .elliptic import EllipticParams, solve_stream
from .errors import DataError
from .fields import FieldSet
from .grid import Grid, resample, sample_at
from .physics import (DimensionParams, advect, d_eta, d_xi,
                      effective_viscosity, energy, gamma_diffusion,
                      omega_diffusion, tendency_gamma, tendency_omega,
                      velocity)

LOG_GAMMA_DELTA0 = 0.4  # the |log r|^{3/2} Gamma bound is tested on r <= 0.4

COLUMNS = [
    "tau", "t_phys", "u1_max_phys", "omega_max_phys",
    "bkm_integral", "enstrophy_n1", "enstrophy_q_integral",
    "lpq_4n3_8", "lpq_2n_4", "lpq_3n_3", "lpq_inf_2",
    "ln_velocity", "log_gamma_crit", "rur_max", "ruz_max",
    "align_ratio", "stretch_diff_u", "stretch_diff_omega",
    "p_min", "bernoulli_max",
    "n", "m", "delta", "R", "Z", "Romega", "Zomega",
    "c_lr", "c_lz", "c_u", "c_psi", "c_omega", "c_gamma",
    "C_lr", "C_lz", "C_u", "C_psi", "C_omega",
    "energy", "dissipation", "selfsim_residual",
]


@dataclass
class DiagRow:
    tau: float = 0.0
    t_phys: float = 0.0
    u1_max_phys: float = 0.0
    omega_max_phys: float = 0.0
    bkm_integral: float = 0.0
    enstrophy_n1: float = 0.0
    enstrophy_q_integral: float = 0.0
    lpq_4n3_8: float = 0.0
    lpq_2n_4: float = 0.0
    lpq_3n_3: float = 0.0
    lpq_inf_2: float = 0.0
    ln_velocity: float = 0.0
    log_gamma_crit: float = 0.0
    rur_max: float = 0.0
    ruz_max: float = 0.0
    align_ratio: float = 0.0
    stretch_diff_u: float = 0.0
    stretch_diff_omega: float = 0.0
    p_min: float = 0.0
    bernoulli_max: float = 0.0
    n: float = 0.0
    m: float = 0.0
    delta: float = 0.0
    R: float = 0.0
    Z: float = 0.0
    Romega: float = 0.0
    Zomega: float = 0.0
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
    energy: float = 0.0
    dissipation: float = 0.0
    selfsim_residual: float = float("nan")
    integrands: dict = field(default_factory=dict, repr=False)

    def values(self):
        return [getattr(self, c) for c in COLUMNS]


def weighted_norm(fld: np.ndarray, grid: Grid, p, weight_exp: float = 0.0) -> float:
    """(int |f|^p xi^weight_exp dxi deta)^(1/p); p = inf gives max |f|."""
    if p == math.inf or p == "inf":
        return float(np.max(np.abs(fld)))
    if p < 1.0:
        raise ValueError(f"norm exponent must be >= 1 or inf, got {p}")
    quad = grid.quad_weights(weight_exp=weight_exp)
    return float(np.sum(np.abs(fld) ** p * quad) ** (1.0 / p))


def bilinear_at(fld: np.ndarray, grid: Grid, x: float, y: float) -> float:
    i = int(np.clip(np.searchsorted(grid.xi, x) - 1, 0, grid.nxi - 1))
    j = int(np.clip(np.searchsorted(grid.eta, y) - 1, 0, grid.neta - 1))
    tx = (x - grid.xi[i]) / (grid.xi[i + 1] - grid.xi[i])
    ty = (y - grid.eta[j]) / (grid.eta[j + 1] - grid.eta[j])
    tx = min(max(tx, 0.0), 1.0)
    ty = min(max(ty, 0.0), 1.0)
    return float((1 - tx) * (1 - ty) * fld[i, j] + tx * (1 - ty) * fld[i + 1, j]
                 + (1 - tx) * ty * fld[i, j + 1] + tx * ty * fld[i + 1, j + 1])


def vorticity_magnitude(f: FieldSet, n: float, delta: float, grid: Grid) -> np.ndarray:
    """Zoomed vector-vorticity magnitude W (physical |omega| = W / C_u)."""
    xi = grid.xi[:, None]
    u1_eta = d_eta(f.u1, grid, parity="odd")
    u1_xi = d_xi(f.u1, grid, parity="even")
    return np.sqrt((xi * f.omega1 / delta) ** 2
                   + (xi * u1_eta / delta) ** 2
                   + ((n - 1.0) * f.u1 + xi * u1_xi) ** 2)


def speed_magnitude(f: FieldSet, delta: float, grid: Grid) -> np.ndarray:
    """Zoomed speed U (physical |u| = U / C_psi)."""
    xi = grid.xi[:, None]
    return np.sqrt((f.uxi / delta) ** 2 + f.ueta ** 2 + (xi * f.u1 / delta) ** 2)


def pointwise_ratios(state) -> dict:
    """Alignment and stretching-vs-diffusion ratios at the tracked peaks."""
    f, scal, cfg, grid = state.fields, state.scal, state.cfg, state.grid
    dims = DimensionParams.for_variant(cfg.variant, scal.n)
    nu = effective_viscosity(cfg, scal)
    psi_eta = d_eta(f.psi1, grid, parity="odd")
    stretch_u = 2.0 * psi_eta * f.u1
    diff_u = -nu.nu_gamma_eff * omega_diffusion(f.u1, dims, scal.delta, grid)
    src = d_eta(f.u1 * f.u1, grid, parity="even")
    diff_w = -nu.nu_omega_eff * omega_diffusion(f.omega1, dims, scal.delta, grid)

    def ratio(num, den, x, y):
        a = bilinear_at(num, grid, x, y)
        b = bilinear_at(den, grid, x, y)
        if abs(b) < 1e-300:
            return math.copysign(math.inf, a)
        return a / b

    align_den = bilinear_at(f.u1, grid, scal.R, scal.Z)
    align_num = bilinear_at(psi_eta, grid, scal.R, scal.Z)
    align = align_num / align_den if abs(align_den) >= 1e-300 \
        else math.copysign(math.inf, align_num)
    return {
        "align_ratio": align,
        "stretch_diff_u": ratio(stretch_u, diff_u, scal.R, scal.Z),
        "stretch_diff_omega": ratio(src, diff_w, scal.Romega, scal.Zomega),
    }


def recover_pressure(state):
    """Zoomed pressure from the weighted divergence of the momentum advection.

    Solves -(p_xixi + ((n-2)/xi) p_xi + p_etaeta) = div_w(u.grad u - F_c) with
    the swirl/density force F_c = (xi u1^2, 0), homogeneous Neumann far-field
    and even symmetry at eta = 0, far-corner zero gauge. Returns
    (p_field, p_min_physical, bernoulli_max_zoomed)."""
    f, scal, cfg, grid = state.fields, state.scal, state.cfg, state.grid
    n = scal.n
    xi = grid.xi[:, None]

    Nxi = -advect(f.uxi, f.uxi, f.ueta, grid, parity_xi="odd",
                  parity_eta="even") - xi * f.u1 ** 2
    Neta = -advect(f.ueta, f.uxi, f.ueta, grid, parity_xi="even",
                   parity_eta="odd")
    dNxi = d_xi(Nxi, grid, parity="odd")
    over_xi = np.empty_like(Nxi)
    over_xi[1:, :] = Nxi[1:, :] / xi[1:]
    over_xi[0, :] = dNxi[0, :]
    rhs = dNxi + (n - 2.0) * over_xi + d_eta(Neta, grid, parity="even")

    params = EllipticParams(n=max(n - 2.0, 0.0), delta=1.0,
                            tol=state.cfg.poisson.tol,
                            max_iter=state.cfg.poisson.max_iter,
                            solver="fastdiag", symmetric_eta0=False)
    p = solve_stream(rhs, params, grid)
    speed2 = f.uxi ** 2 + f.ueta ** 2 + (xi * f.u1) ** 2
    bernoulli = float(np.max(np.abs(0.5 * speed2 + p)))
    p_min_phys = float(np.min(p)) / scal.C_u
    return p, p_min_phys, bernoulli


def selfsim_residual(state, c_l: float, nu0: float) -> float:
    """Weighted L2 residual of the steady one-scale profile equations.

    Evaluated on the current profiles with the given drift rate c_l and
    viscosity nu0; the amplitude rates follow from zero circulation growth
    (c_u = -2 c_l, hence c_omega = -3 c_l)."""
    f, scal, cfg, grid = state.fields, state.scal, state.cfg, state.grid
    Fg = tendency_gamma(f, scal, cfg, grid)
    Fw = tendency_omega(f, scal, cfg, grid)
    xi = grid.xi[:, None]
    eta = grid.eta[None, :]

    def drift(a, parity_eta):
        return xi * d_xi(a, grid, parity="even") * c_l \
            + eta * d_eta(a, grid, parity=parity_eta) * c_l

    Rg = drift(f.gamma, "odd") - Fg
    Rw = drift(f.omega1, "odd") - (-3.0 * c_l) * f.omega1 - Fw
    quad = grid.quad_weights(weight_exp=scal.n)
    return float(np.sqrt(np.sum((Rg ** 2 + Rw ** 2) * quad)))


# ---------------------------------------------------------------------------
# per-step criteria row


def _trapz_advance(prev: DiagRow, row: DiagRow, key: str, attr: str, value: float):
    """Accumulate int value dtau by trapezoid between consecutive rows."""
    row.integrands[key] = value
    if prev is None:
        setattr(row, attr, 0.0)
        return
    dtau = row.tau - prev.tau
    old = getattr(prev, attr)
    prev_val = prev.integrands.get(key, value)
    setattr(row, attr, old + 0.5 * (prev_val + value) * dtau)


def criteria_step(state, prev: DiagRow | None, *, full: bool = True) -> DiagRow:
    """One diagnostics row; accumulations advance from `prev` by trapezoid.

    With full=False the elliptic pressure solve and steady-profile residual
    are skipped (carried forward from the previous row)."""
    f, scal, cfg, grid = state.fields, state.scal, state.cfg, state.grid
    n = scal.n
    row = DiagRow()
    row.tau = scal.tau
    row.t_phys = scal.t_phys
    row.n, row.m, row.delta = scal.n, scal.m, scal.delta
    row.R, row.Z = scal.R, scal.Z
    row.Romega, row.Zomega = scal.Romega, scal.Zomega
    for k in ("c_lr", "c_lz", "c_u", "c_psi", "c_omega", "c_gamma",
              "C_lr", "C_lz", "C_u", "C_psi", "C_omega"):
        setattr(row, k, getattr(scal, k))

    u1max = float(np.max(np.abs(f.u1)))
    row.u1_max_phys = u1max / scal.C_u

    W = vorticity_magnitude(f, n, scal.delta, grid)
    wmax = float(np.max(W))
    row.omega_max_phys = wmax / scal.C_u
    _trapz_advance(prev, row, "bkm", "bkm_integral", wmax)

    # generalized enstrophy and its q-time integral
    C_gamma_acc = scal.C_u / scal.C_lr ** 2
    vol = scal.C_lr ** (n - 1.0) * scal.C_lz
    ens = vol / scal.C_u ** (n - 1.0) \
        * float(np.sum(W ** (n - 1.0) * grid.quad_weights(weight_exp=n - 2.0)))
    row.enstrophy_n1 = ens
    q = 2.0 * (n - 1.0) / (n - 2.0)
    dt_dtau = scal.C_psi * scal.C_lz
    _trapz_advance(prev, row, "ens_q", "enstrophy_q_integral",
                   ens ** (q / (n - 1.0)) * dt_dtau)

    # velocity space-time norms
    U = speed_magnitude(f, scal.delta, grid)
    for p_exp, q_exp, attr in ((4.0 * n / 3.0, 8.0, "lpq_4n3_8"),
                               (2.0 * n, 4.0, "lpq_2n_4"),
                               (3.0 * n, 3.0, "lpq_3n_3")):
        unorm = vol ** (1.0 / p_exp) / scal.C_psi \
            * weighted_norm(U, grid, p_exp, weight_exp=n - 2.0)
        _trapz_advance(prev, row, attr, attr, unorm ** q_exp * dt_dtau)
    uinf = float(np.max(U)) / scal.C_psi
    _trapz_advance(prev, row, "lpq_inf_2", "lpq_inf_2", uinf ** 2 * dt_dtau)
    row.ln_velocity = vol ** (1.0 / n) / scal.C_psi \
        * weighted_norm(U, grid, n, weight_exp=n - 2.0)

    # weighted-circulation criterion on the shrinking physical window
    r_phys = scal.C_lr * grid.xi
    mask = (r_phys > 0.0) & (r_phys <= LOG_GAMMA_DELTA0)
    if np.any(mask):
        wlog = np.abs(np.log(r_phys[mask])) ** 1.5
        row.log_gamma_crit = float(
            np.max(wlog[:, None] * np.abs(f.gamma[mask, :])) / C_gamma_acc)

    xi = grid.xi[:, None]
    row.rur_max = scal.C_lr / (scal.delta * scal.C_psi) \
        * float(np.max(np.abs(xi * f.uxi)))
    row.ruz_max = scal.C_lr / scal.C_psi * float(np.max(np.abs(xi * f.ueta)))

    ratios = pointwise_ratios(state)
    row.align_ratio = ratios["align_ratio"]
    row.stretch_diff_u = ratios["stretch_diff_u"]
    row.stretch_diff_omega = ratios["stretch_diff_omega"]

    dims = DimensionParams.for_variant(cfg.variant, n)
    nu = effective_viscosity(cfg, scal)
    row.energy, row.dissipation = energy(
        f, dims, cfg, grid, nu_pair=(nu.nu_gamma_eff, nu.nu_omega_eff))

    if full:
        _, row.p_min, row.bernoulli_max = recover_pressure(state)
        if cfg.variant == "generalized-nse":
            c_l = scal.c_lz if scal.c_lz != 0.0 else 0.0
            row.selfsim_residual = selfsim_residual(state, c_l, cfg.nu0)
    elif prev is not None:
        row.p_min = prev.p_min
        row.bernoulli_max = prev.bernoulli_max
        row.selfsim_residual = prev.selfsim_residual
    return row


# ---------------------------------------------------------------------------
# streamlines


@dataclass
class Streamline:
    points: np.ndarray  # (N, 3) Cartesian samples
    exited: bool


def trace_streamlines(state, seeds, arc: float, max_step: float = 0.05,
                      rtol: float = 1e-9, atol: float = 1e-11):
    """Integrate d xi/ds = u^xi, d theta/ds = u1, d eta/ds = u^eta to the
    requested 3-D arc length; emits Cartesian polylines.

    The flow is extended to eta < 0 by parity (even u^xi, odd u^eta, odd
    swirl), so trajectories may legitimately cross the symmetry plane;
    leaving the (xi, |eta|) box truncates the polyline with an exit flag."""
    f, grid = state.fields, state.grid
    xi_hi = grid.xi_max * (1.0 - 1e-9)
    eta_hi = grid.eta_max * (1.0 - 1e-9)

    def sample(fld, x, e, sign_odd):
        v = sample_at(fld, grid, np.array([x]), np.array([abs(e)]))[0]
        return v * (math.copysign(1.0, e) if sign_odd else 1.0)

    def rhs(_s, y):
        x, _th, e = y[0], y[1], y[2]
        x = min(max(x, 0.0), grid.xi_max)
        uxi = sample(f.uxi, x, e, sign_odd=False)
        ueta = sample(f.ueta, x, e, sign_odd=True)
        u1 = sample(f.u1, x, e, sign_odd=True)
        speed = math.sqrt(uxi * uxi + ueta * ueta + (x * u1) ** 2)
        return [uxi, u1, ueta, speed]

    def hit_edge(_s, y):
        return min(xi_hi - y[0], eta_hi - abs(y[2]))
    hit_edge.terminal = True
    hit_edge.direction = -1.0

    def arc_done(_s, y):
        return y[3] - arc
    arc_done.terminal = True
    arc_done.direction = 1.0

    out = []
    for (r0, z0) in seeds:
        speed0 = rhs(0.0, [r0, 0.0, z0, 0.0])[3]
        if speed0 == 0.0:
            pt = np.array([[r0, 0.0, z0]])
            out.append(Streamline(points=pt, exited=False))
            continue
        t_span = (0.0, 1e3 * (1.0 + arc / max(speed0, 1e-12)))
        sol = scipy.integrate.solve_ivp(
            rhs, t_span, [r0, 0.0, z0, 0.0], events=(arc_done, hit_edge),
            max_step=max_step * (1.0 + arc) / max(speed0, 1e-12),
            rtol=rtol, atol=atol, dense_output=True)
        n_pts = max(int(200 * (1 + arc / (2 * math.pi))), 200)
        ts = np.linspace(sol.t[0], sol.t[-1], min(n_pts, 4000))
        ys = sol.sol(ts)
        pts = np.column_stack([ys[0] * np.cos(ys[1]),
                               ys[0] * np.sin(ys[1]),
                               ys[2]])
        exited = len(sol.t_events[1]) > 0
        out.append(Streamline(points=pts, exited=exited))
    return out


# ---------------------------------------------------------------------------
# profile similarity


def profile_similarity(omega_a: np.ndarray, grid_a: Grid, center_a, lam_a: float,
                       omega_b: np.ndarray, grid_b: Grid, center_b, lam_b: float,
                       ) -> float:
    """Relative L2 difference of two vorticity profiles in centered,
    lambda-scaled coordinates ((xi - R) lam, (eta - Z) lam).

    Snapshot B is resampled onto snapshot A's scaled coordinates; nodes whose
    preimage leaves B's domain are excluded from both norms."""
    Ra, Za = center_a
    Rb, Zb = center_b
    xi_t = Rb + (grid_a.xi - Ra) * (lam_a / lam_b)
    eta_t = Zb + (grid_a.eta - Za) * (lam_a / lam_b)
    ok_x = (xi_t >= 0.0) & (xi_t <= grid_b.xi_max)
    ok_y = (eta_t >= 0.0) & (eta_t <= grid_b.eta_max)
    xi_c = np.clip(xi_t, 0.0, grid_b.xi_max)
    eta_c = np.clip(eta_t, 0.0, grid_b.eta_max)
    b_on_a = resample(omega_b, grid_b, xi_c, eta_c, extension="zero")
    quad = grid_a.quad_weights()
    quad = quad * (ok_x[:, None] & ok_y[None, :])
    num = float(np.sum((omega_a - b_on_a) ** 2 * quad))
    den = float(np.sum(omega_a ** 2 * quad))
    if den == 0.0:
        return 0.0
    return math.sqrt(num / den)


# ---------------------------------------------------------------------------
# CSV-backed time series


class TimeSeries:
    """Column arrays loaded from a diagnostics CSV."""

    def __init__(self, columns: dict[str, np.ndarray]):
        self._columns = columns
        for k, v in columns.items():
            setattr(self, k, v)

    def __len__(self):
        return next(iter(self._columns.values())).size if self._columns else 0

    @staticmethod
    def from_csv(path) -> "TimeSeries":
        with open(path, "r", encoding="utf-8") as fh:
            header = fh.readline().strip().split(",")
            data = np.loadtxt(fh, delimiter=",", ndmin=2)
        if data.size == 0:
            raise DataError(f"empty diagnostics series in {path}")
        if data.shape[1] != len(header):
            raise DataError(f"column mismatch in {path}")
        return TimeSeries({name: data[:, k] for k, name in enumerate(header)})
