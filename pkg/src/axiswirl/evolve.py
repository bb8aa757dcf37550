"""Run loop: explicit physics step, exact control step, step-size control,
domain expansion, checkpointing, and the driver.

Per iteration the loop solves the stream function once (warm-started from the
control step's resample), emits diagnostics on the configured stride, then
takes one split step: forward-Euler (or Heun) on the physical tendencies
followed by the closed-form control step that re-pins the swirl peak.
"""

from __future__ import annotations

import math
import sys
import time as _time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import diagnostics as diag
from . import io as sio
from .config import ModelConfig
from .elliptic import EllipticParams, solve_stream
from .errors import (AxiswirlError, ConfigError, NumericalBlowupError,
                     StagnationError)
from .fields import (FieldSet, enforce_symmetry, gamma_from_u1, init_fields,
                     u1_from_gamma)
from .grid import Grid, build_grid, expand_domain, regrid_field
from .physics import (DimensionParams, effective_viscosity, tendency_gamma,
                      tendency_omega, tendency_u1, velocity)
from .scaling import ScalingState, apply_zoom, normalization_step, update_dimension

_U1_RUNAWAY = 1e6


@dataclass
class SimState:
    cfg: ModelConfig
    grid: Grid
    fields: FieldSet
    scal: ScalingState
    step_index: int = 0
    dtau: float = 0.0
    expand_ref_R: float = math.inf
    last_K: tuple = (1.0, 1.0, 1.0)

    def elliptic_params(self) -> EllipticParams:
        p = self.cfg.poisson
        solver = "fastdiag" if p.solver == "auto" else p.solver
        return EllipticParams(n=self.scal.n, delta=self.scal.delta,
                              tol=p.tol, max_iter=p.max_iter, solver=solver,
                              symmetric_eta0=self.cfg.symmetric_sector)

    def refresh(self) -> None:
        """Re-solve the stream function and derive velocities."""
        self.fields.psi1 = solve_stream(self.fields.omega1,
                                        self.elliptic_params(), self.grid,
                                        psi0=self.fields.psi1)
        dims = DimensionParams.for_variant(self.cfg.variant, self.scal.n)
        self.fields.uxi, self.fields.ueta = velocity(self.fields.psi1, dims,
                                                     self.grid)

    def controller_active(self) -> bool:
        return self.cfg.controller and self.scal.tau >= self.cfg.time.freeze_until

    def clone(self) -> "SimState":
        return SimState(cfg=self.cfg, grid=self.grid,
                        fields=self.fields.clone(), scal=self.scal.clone(),
                        step_index=self.step_index, dtau=self.dtau,
                        expand_ref_R=self.expand_ref_R, last_K=self.last_K)


def choose_dt(state: SimState, cfl: float) -> float:
    """cfl * min over nodes of (h_xi/|u^xi + c_lr xi|, h_eta/|u^eta + c_lz eta|,
    h^2/(2 nu_eff)), capped by dtau_max."""
    cfg, grid, scal, f = state.cfg, state.grid, state.scal, state.fields
    if cfg.time.dtau_fixed > 0.0:
        return cfg.time.dtau_fixed
    hx = grid.local_dxi()[:, None]
    hy = grid.local_deta()[None, :]
    sx = np.abs(f.uxi + scal.c_lr * grid.xi[:, None])
    sy = np.abs(f.ueta + scal.c_lz * grid.eta[None, :])
    with np.errstate(divide="ignore"):
        dt = min(float(np.min(np.where(sx > 0, hx / np.maximum(sx, 1e-300), np.inf))),
                 float(np.min(np.where(sy > 0, hy / np.maximum(sy, 1e-300), np.inf))))
    nu = effective_viscosity(cfg, scal)
    nu_max = max(nu.nu_gamma_eff, nu.nu_omega_eff)
    if nu_max > 0.0:
        h_eff = np.minimum(hx / scal.delta, np.broadcast_to(hy, np.broadcast_shapes(hx.shape, hy.shape)))
        dt = min(dt, float(np.min(h_eff ** 2)) / (2.0 * nu_max))
    dt = min(cfl * dt, cfg.time.dtau_max)
    if not dt > 0.0 or not math.isfinite(dt):
        raise StagnationError(f"time step collapsed to {dt}")
    return dt


def _f_step(state: SimState, dtau: float) -> None:
    """Forward-Euler (or Heun) update of the prognostic fields."""
    cfg, grid, scal, f = state.cfg, state.grid, state.scal, state.fields
    classic = cfg.variant == "classic-nse-u1"

    def tendencies(fs: FieldSet):
        if classic:
            return tendency_u1(fs, scal, cfg, grid), tendency_omega(fs, scal, cfg, grid)
        return tendency_gamma(fs, scal, cfg, grid), tendency_omega(fs, scal, cfg, grid)

    def apply(fs: FieldSet, ka, kw, h: float) -> FieldSet:
        out = fs.clone()
        if classic:
            out.u1 = fs.u1 + h * ka
            out.gamma = gamma_from_u1(out.u1, grid)
        else:
            out.gamma = fs.gamma + h * ka
        out.omega1 = fs.omega1 + h * kw
        enforce_symmetry(out)
        if not classic:
            out.u1 = u1_from_gamma(out.gamma, grid)
        return out

    k1a, k1w = tendencies(f)
    if cfg.time.rk2 or cfg.time.strang:
        mid = apply(f, k1a, k1w, dtau)
        mid.psi1 = solve_stream(mid.omega1, state.elliptic_params(), grid,
                                psi0=f.psi1)
        dims = DimensionParams.for_variant(cfg.variant, scal.n)
        mid.uxi, mid.ueta = velocity(mid.psi1, dims, grid)
        k2a, k2w = tendencies(mid)
        new = apply(f, 0.5 * (k1a + k2a), 0.5 * (k1w + k2w), dtau)
    else:
        new = apply(f, k1a, k1w, dtau)
    new.psi1 = f.psi1  # stale until the next refresh
    state.fields = new


def _check_runaway(state: SimState) -> None:
    m = float(np.max(np.abs(state.fields.u1)))
    if not math.isfinite(m) or m > _U1_RUNAWAY:
        raise NumericalBlowupError(
            f"zoomed swirl amplitude {m:.3e} escaped the controller")


def advance(state: SimState) -> SimState:
    """One full step: elliptic solve, velocities, physics step, control step,
    dimension update, optional domain expansion. Returns the mutated state."""
    state.refresh()
    step(state)
    return state


def step(state: SimState) -> None:
    """The post-refresh part of `advance` (tendencies need a fresh psi1)."""
    cfg, scal = state.cfg, state.scal
    dtau = choose_dt(state, cfg.time.cfl)
    state.dtau = dtau
    tphys_rate_pre = scal.C_psi * scal.C_lz

    C_before = (scal.C_lr, scal.C_lz, scal.C_u)
    if cfg.time.strang and state.controller_active() and state.last_K != (1.0, 1.0, 1.0):
        Kh = tuple(math.sqrt(k) for k in state.last_K)
        state.fields = apply_zoom(state.fields, state.grid, *Kh,
                                  classic=cfg.variant == "classic-nse-u1")
        scal.C_lr *= Kh[0]
        scal.C_lz *= Kh[1]
        scal.C_u *= Kh[2]
        scal.C_psi *= Kh[2] / Kh[1]
        scal.C_omega *= Kh[2] * Kh[1]

    _f_step(state, dtau)
    _check_runaway(state)

    if state.controller_active():
        state.fields, state.scal = normalization_step(
            state.fields, scal, cfg, state.grid, dtau)
        scal = state.scal
        if cfg.time.strang:
            # rates from the total factor change across the whole step
            scal.c_lr = -math.log(scal.C_lr / C_before[0]) / dtau
            scal.c_lz = -math.log(scal.C_lz / C_before[1]) / dtau
            scal.c_u = math.log(scal.C_u / C_before[2]) / dtau
            scal.c_psi = scal.c_u + scal.c_lz
            scal.c_omega = scal.c_u - scal.c_lz
            scal.c_gamma = scal.c_u + 2.0 * scal.c_lr
        state.last_K = (scal.C_lr / C_before[0], scal.C_lz / C_before[1],
                        scal.C_u / C_before[2])
        if cfg.dimension_law != "fixed":
            dims = update_dimension(scal.R_phys, scal.Z_phys, cfg)
            relax = cfg.dimension_relax
            if relax > 0.0:
                blend = min(dtau / relax, 1.0)
                n_new = scal.n + blend * (dims.n - scal.n)
                dims = DimensionParams.for_variant(cfg.variant, n_new) \
                    if cfg.variant == "generalized-boussinesq" \
                    else DimensionParams(n=n_new, m=n_new)
            scal.n, scal.m = dims.n, dims.m

    scal.tau += dtau
    scal.t_phys += 0.5 * (tphys_rate_pre + scal.C_psi * scal.C_lz) * dtau
    state.step_index += 1

    if (cfg.grid.expand and state.controller_active()
            and scal.R_phys < cfg.grid.expand_fraction * state.expand_ref_R):
        _expand(state)


def _expand(state: SimState) -> None:
    scal = state.scal
    new_grid = expand_domain(state.grid, scal.R_phys, scal.Z_phys)
    f = state.fields
    new = FieldSet(
        gamma=regrid_field(f.gamma, state.grid, new_grid, extension="const"),
        omega1=regrid_field(f.omega1, state.grid, new_grid, extension="zero"),
        psi1=regrid_field(f.psi1, state.grid, new_grid, extension="zero"),
        u1=np.zeros(new_grid.shape), uxi=np.zeros(new_grid.shape),
        ueta=np.zeros(new_grid.shape))
    enforce_symmetry(new)
    new.u1 = u1_from_gamma(new.gamma, new_grid)
    state.grid = new_grid
    state.fields = new
    state.expand_ref_R = scal.R_phys


@dataclass
class RunResult:
    exit_reason: str               # completed | max-steps | numerical-failure | error
    steps: int
    tau: float
    t_phys: float
    wall_seconds: float
    omega_growth: float            # physical max-vorticity growth factor
    csv_path: str = ""
    snapshot_paths: list = field(default_factory=list)
    checkpoint_path: str = ""
    message: str = ""


def _init_state(cfg: ModelConfig) -> SimState:
    if cfg.init == "file":
        # the snapshot's mesh is authoritative: the stored fields live on it
        _, grid, fields, _, _ = sio.load_snapshot(cfg.init_file)
        if (grid.nxi, grid.neta) != (cfg.grid.nxi, cfg.grid.neta):
            raise ConfigError(
                f"snapshot initializer resolution {grid.nxi}x{grid.neta} does "
                f"not match grid.nxi x grid.neta")
    else:
        grid = build_grid(cfg)
        fields = init_fields(cfg, grid)
    scal = ScalingState(n=cfg.n_fixed, m=DimensionParams.for_variant(
        cfg.variant, cfg.n_fixed).m)
    state = SimState(cfg=cfg, grid=grid, fields=fields, scal=scal)
    if cfg.controller and cfg.time.freeze_until <= 0.0:
        # seed the frame: pin the initial peak; the initial factors then
        # encode the raw data's physical aspect (which sets n at tau = 0)
        state.fields, state.scal = normalization_step(fields, scal, cfg, grid,
                                                      dtau=0.0)
        if cfg.dimension_law != "fixed":
            dims = update_dimension(state.scal.R_phys, state.scal.Z_phys, cfg)
            state.scal.n, state.scal.m = dims.n, dims.m
    state.expand_ref_R = state.scal.R_phys if state.scal.R_phys > 0 else math.inf
    return state


def _resume_state(checkpoint: str, cfg_override: ModelConfig | None) -> SimState:
    cfg, grid, fields, scal, meta = sio.load_snapshot(checkpoint)
    if cfg_override is not None:
        cfg.time.tau_end = cfg_override.time.tau_end
        cfg.time.max_steps = cfg_override.time.max_steps
        cfg.output = cfg_override.output
    state = SimState(cfg=cfg, grid=grid, fields=fields, scal=scal,
                     step_index=meta["step_index"], dtau=meta["dtau"])
    ex = meta["extras"]
    state.expand_ref_R = float(ex.get("expand_ref_R", math.inf))
    state.last_K = (float(ex.get("last_K_lr", 1.0)),
                    float(ex.get("last_K_lz", 1.0)),
                    float(ex.get("last_K_u", 1.0)))
    state._resume_prev_row = meta["prev_row"]
    return state


def _checkpoint_blob(state: SimState, prev_row) -> bytes:
    extras = {"expand_ref_R": state.expand_ref_R,
              "last_K_lr": state.last_K[0], "last_K_lz": state.last_K[1],
              "last_K_u": state.last_K[2]}
    return sio.write_snapshot(state.cfg, state.grid, state.fields, state.scal,
                              step_index=state.step_index, dtau=state.dtau,
                              prev_row=prev_row, extras=extras)


def run(cfg: ModelConfig, resume: str | None = None,
        progress=None) -> RunResult:
    """Execute a configured run; emits snapshots, checkpoints, and the
    diagnostics CSV under cfg.output.dir."""
    t_wall = _time.time()
    if progress is None:
        progress = lambda msg: print(msg, file=sys.stderr)

    state = _resume_state(resume, cfg) if resume else _init_state(cfg)
    cfg = state.cfg
    out = Path(cfg.output.dir)
    out.mkdir(parents=True, exist_ok=True)

    prev_row = getattr(state, "_resume_prev_row", None)
    csv_path = out / "diagnostics.csv"
    mode_fresh = resume is None
    if mode_fresh:
        csv = sio.DiagCsv(csv_path)
    else:
        csv = _append_csv(csv_path)

    snap_interval = cfg.output.snapshot_interval
    next_snap = state.scal.tau if mode_fresh else state.scal.tau + snap_interval
    snapshots: list = []
    growth_ref = None
    exit_reason = "completed"
    message = ""

    try:
        while True:
            state.refresh()
            emit = (state.step_index % cfg.output.diag_stride == 0)
            if emit:
                row = diag.criteria_step(state, prev_row, full=True)
                csv.append(row)
                prev_row = row
                if growth_ref is None and row.omega_max_phys > 0:
                    growth_ref = row.omega_max_phys
            if snap_interval > 0 and state.scal.tau >= next_snap - 1e-12:
                p = out / f"snap_{state.scal.tau:012.6f}.bin"
                sio.save_snapshot(p, cfg, state.grid, state.fields, state.scal,
                                  step_index=state.step_index, dtau=state.dtau)
                snapshots.append(str(p))
                while next_snap <= state.scal.tau + 1e-12:
                    next_snap += snap_interval
            if state.scal.tau >= cfg.time.tau_end - 1e-12:
                break
            if state.step_index >= cfg.time.max_steps:
                exit_reason = "max-steps"
                break
            step(state)
            if state.step_index % cfg.output.checkpoint_every == 0:
                (out / "checkpoint.bin").write_bytes(
                    _checkpoint_blob(state, prev_row))
            if state.step_index % 200 == 0:
                progress(f"step {state.step_index}  tau={state.scal.tau:.4f}  "
                         f"n={state.scal.n:.4f}  delta={state.scal.delta:.4f}")
    except AxiswirlError as exc:
        exit_reason = "numerical-failure"
        message = str(exc)
        progress(f"run failed: {exc}")
    finally:
        ck = out / "checkpoint.bin"
        ck.write_bytes(_checkpoint_blob(state, prev_row))
        csv.close()

    growth = 0.0
    if prev_row is not None and growth_ref:
        growth = prev_row.omega_max_phys / growth_ref
    return RunResult(exit_reason=exit_reason, steps=state.step_index,
                     tau=state.scal.tau, t_phys=state.scal.t_phys,
                     wall_seconds=_time.time() - t_wall,
                     omega_growth=growth, csv_path=str(csv_path),
                     snapshot_paths=snapshots, checkpoint_path=str(ck),
                     message=message)


class _AppendCsv:
    def __init__(self, path):
        self._fh = open(path, "a", encoding="utf-8", newline="\n")

    def append(self, row) -> None:
        self._fh.write(",".join(f"{v:.17g}" for v in row.values()) + "\n")
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()


def _append_csv(path) -> _AppendCsv:
    if not Path(path).exists():
        c = sio.DiagCsv(path)
        c.close()
    return _AppendCsv(path)
