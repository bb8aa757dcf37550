"""Prognostic and derived field state, initial data, and the gamma/u1 algebra.

Fields live on Grid nodes, shape (nxi+1, neta+1), indexed [i, j] = (xi, eta).
In the symmetric sector u1, omega1, psi1 are even in xi and odd in eta;
gamma = xi**2 * u1 is even in xi and odd in eta. The eta = 0 row of all four
is therefore identically zero, as is the gamma column on the axis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import Grid


@dataclass
class FieldSet:
    gamma: np.ndarray   # total circulation / density, zoomed frame
    omega1: np.ndarray  # angular vorticity over radius
    psi1: np.ndarray    # angular stream function over radius
    u1: np.ndarray      # gamma / xi**2 (derived)
    uxi: np.ndarray     # meridional velocity components (derived)
    ueta: np.ndarray

    def clone(self) -> "FieldSet":
        return FieldSet(*(a.copy() for a in
                          (self.gamma, self.omega1, self.psi1,
                           self.u1, self.uxi, self.ueta)))


def empty_fields(grid: Grid) -> FieldSet:
    z = lambda: np.zeros(grid.shape)
    return FieldSet(z(), z(), z(), z(), z(), z())


def _axis_fit_weights(grid: Grid) -> np.ndarray:
    """Weights extrapolating an even function to xi=0 from nodes 1..3.

    Fits a + b*xi**2 + c*xi**4 through the first three interior nodes and
    returns the coefficients of the node values in `a`.
    """
    x = grid.xi[1:4]
    V = np.vander(x ** 2, 3, increasing=True)  # rows [1, xi^2, xi^4]
    return np.linalg.solve(V.T, np.array([1.0, 0.0, 0.0]))


def u1_from_gamma(gamma: np.ndarray, grid: Grid) -> np.ndarray:
    """u1 = gamma / xi**2 with the axis value from the even quartic fit."""
    u1 = np.empty_like(gamma)
    u1[1:, :] = gamma[1:, :] / grid.xi[1:, None] ** 2
    w = _axis_fit_weights(grid)
    u1[0, :] = w[0] * u1[1, :] + w[1] * u1[2, :] + w[2] * u1[3, :]
    return u1


def gamma_from_u1(u1: np.ndarray, grid: Grid) -> np.ndarray:
    return u1 * grid.xi[:, None] ** 2


def enforce_symmetry(f: FieldSet) -> None:
    """Re-impose the exact zeros implied by parity (odd in eta, gamma ~ xi^2)."""
    f.gamma[:, 0] = 0.0
    f.omega1[:, 0] = 0.0
    f.psi1[:, 0] = 0.0
    f.u1[:, 0] = 0.0
    f.gamma[0, :] = 0.0


def far_field_cutoff(field: np.ndarray, grid: Grid,
                     rho_c: float = 0.0, k: int = 8) -> np.ndarray:
    """Multiply by the smooth radial bump exp(-(rho/rho_c)**k).

    rho is the meridional radius sqrt(xi^2 + eta^2); rho_c defaults to half
    the smaller domain extent.
    """
    if rho_c <= 0.0:
        rho_c = 0.5 * min(grid.xi_max, grid.eta_max)
    rho = np.sqrt(grid.xi[:, None] ** 2 + grid.eta[None, :] ** 2)
    return field * np.exp(-((rho / rho_c) ** k))


def swirl_profile(r, z):
    """Large-swirl initial angular velocity over radius, on the unit disk.

    12000 (1-r^2)^18 sin(2 pi z) / (1 + 12.5 sin(pi z)^2), zero for r > 1.
    """
    r = np.asarray(r, dtype=float)
    z = np.asarray(z, dtype=float)
    core = np.where(r <= 1.0, (1.0 - np.minimum(r, 1.0) ** 2) ** 18, 0.0)
    return 12000.0 * core * np.sin(2.0 * np.pi * z) / (1.0 + 12.5 * np.sin(np.pi * z) ** 2)


def init_swirl(grid: Grid) -> FieldSet:
    """Seed the frame with the unit-disk swirl data; omega1 = psi1 = 0."""
    f = empty_fields(grid)
    f.u1 = swirl_profile(grid.xi[:, None], grid.eta[None, :])
    f.gamma = gamma_from_u1(f.u1, grid)
    enforce_symmetry(f)
    return f


def _mirrored_bump(grid: Grid, xi0: float, eta0: float,
                   sigma_xi: float, sigma_eta: float) -> np.ndarray:
    """Gaussian bump at (xi0, eta0) with mirror images enforcing even
    symmetry in xi and odd symmetry in eta."""
    g = lambda x, s: np.exp(-0.5 * (x / s) ** 2)
    xi = grid.xi[:, None]
    eta = grid.eta[None, :]
    return ((g(xi - xi0, sigma_xi) + g(xi + xi0, sigma_xi))
            * (g(eta - eta0, sigma_eta) - g(eta + eta0, sigma_eta)))


def init_ring(grid: Grid, xi0: float, eta0: float,
              sigma_xi: float, sigma_eta: float,
              omega_amp: float = 0.0, omega_xi0: float = 0.0,
              omega_eta0: float = 0.0,
              cutoff: bool = True, cutoff_rho: float = 0.0,
              cutoff_k: int = 8) -> FieldSet:
    """Anti-symmetric Gaussian vortex-ring pair seed.

    The swirl bump sits at (xi0, eta0); its peak is scaled to one so the
    controller starts approximately normalized (the first exact enforcement
    step removes the remainder). A positive omega_amp adds a matching
    vortex-dipole pair (default position: below the swirl peak), whose
    induced meridional flow is the inward jet along eta = 0 that feeds the
    front; with omega_amp = 0 the dipole has to develop from the swirl
    source term alone.
    """
    u1 = _mirrored_bump(grid, xi0, eta0, sigma_xi, sigma_eta)
    if cutoff:
        u1 = far_field_cutoff(u1, grid, rho_c=cutoff_rho, k=cutoff_k)
    peak = float(np.max(u1))
    if peak > 0.0:
        u1 = u1 / peak
    f = empty_fields(grid)
    f.u1 = u1
    f.gamma = gamma_from_u1(u1, grid)
    if omega_amp != 0.0:
        ox = omega_xi0 if omega_xi0 > 0.0 else xi0
        oe = omega_eta0 if omega_eta0 > 0.0 else 0.5 * eta0
        w = _mirrored_bump(grid, ox, oe, sigma_xi, sigma_eta)
        if cutoff:
            w = far_field_cutoff(w, grid, rho_c=cutoff_rho, k=cutoff_k)
        f.omega1 = omega_amp * w / float(np.max(np.abs(w)))
    enforce_symmetry(f)
    return f


def init_front(grid: Grid, front_xi: float, front_width: float,
               front_core: float, eta0: float, sigma_eta: float,
               omega_amp: float = 0.0, omega_xi0: float = 0.0,
               omega_eta0: float = 0.0, omega_sigma: float = 1.4,
               cutoff: bool = True, cutoff_rho: float = 0.0,
               cutoff_k: int = 8) -> FieldSet:
    """Circulation-front seed: a smoothed step in gamma at front_xi with an
    O(1) reservoir plateau outside, mollified to vanish like xi^2 on the
    axis, times an odd profile in eta. The swirl peak u1 = gamma/xi^2 then
    sits just inside the front; an optional vortex-dipole pair supplies the
    inward jet that drives it.
    """
    xi = grid.xi[:, None]
    eta = grid.eta[None, :]
    g = lambda x, s: np.exp(-0.5 * (x / s) ** 2)
    P = 0.5 * (1.0 + np.tanh((xi - front_xi) / front_width))
    P = P * xi ** 2 / (xi ** 2 + front_core ** 2)
    S = g(eta - eta0, sigma_eta) - g(eta + eta0, sigma_eta)
    gamma = P * S
    f = empty_fields(grid)
    f.gamma = gamma
    f.u1 = u1_from_gamma(gamma, grid)
    peak = float(np.max(f.u1))
    f.u1 /= peak
    f.gamma /= peak
    if omega_amp != 0.0:
        ox = omega_xi0 if omega_xi0 > 0.0 else front_xi
        oe = omega_eta0 if omega_eta0 > 0.0 else 0.8 * eta0
        w = _mirrored_bump(grid, ox, oe, omega_sigma, omega_sigma)
        if cutoff:
            w = far_field_cutoff(w, grid, rho_c=cutoff_rho, k=cutoff_k)
        f.omega1 = omega_amp * w / float(np.max(np.abs(w)))
    enforce_symmetry(f)
    return f


def init_fields(cfg, grid: Grid) -> FieldSet:
    """Dispatch on the configured initializer (snapshot loading lives in io)."""
    if cfg.init == "swirl":
        return init_swirl(grid)
    if cfg.init == "ring":
        return init_ring(grid, cfg.ring_xi0, cfg.ring_eta0,
                         cfg.ring_sigma_xi, cfg.ring_sigma_eta,
                         omega_amp=cfg.ring_omega_amp,
                         omega_xi0=cfg.ring_omega_xi0,
                         omega_eta0=cfg.ring_omega_eta0,
                         cutoff=cfg.cutoff, cutoff_rho=cfg.cutoff_rho,
                         cutoff_k=cfg.cutoff_k)
    if cfg.init == "front":
        return init_front(grid, cfg.front_xi, cfg.front_width, cfg.front_core,
                          cfg.ring_eta0, cfg.ring_sigma_eta,
                          omega_amp=cfg.ring_omega_amp,
                          omega_xi0=cfg.ring_omega_xi0,
                          omega_eta0=cfg.ring_omega_eta0,
                          omega_sigma=cfg.ring_sigma_xi,
                          cutoff=cfg.cutoff, cutoff_rho=cfg.cutoff_rho,
                          cutoff_k=cfg.cutoff_k)
    raise ValueError(f"initializer {cfg.init!r} is not built here")
