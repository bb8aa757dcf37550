"""Command-line surface: run, diagnose, streamlines, residual, fit.

Exit codes: 0 normal end, 2 numerical failure, 3 configuration error.
AXISWIRL_THREADS caps the linear-algebra thread pools (set before numpy
loads, so this module configures it at import time of the heavy modules).
"""

from __future__ import annotations

import argparse
import os
import sys

_threads = os.environ.get("AXISWIRL_THREADS")
if _threads:
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(var, _threads)

import numpy as np  # noqa: E402

from .config import ModelConfig, parse_config  # noqa: E402
from .errors import AxiswirlError, ConfigError  # noqa: E402


def _load_config(path: str) -> ModelConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


def _cmd_run(args) -> int:
    from .evolve import run
    cfg = _load_config(args.config)
    if args.out:
        cfg.output.dir = args.out
    result = run(cfg, resume=args.resume)
    print(f"exit: {result.exit_reason}  steps: {result.steps}  "
          f"tau: {result.tau:.6f}  t: {result.t_phys:.6g}  "
          f"omega growth: {result.omega_growth:.3e}  "
          f"wall: {result.wall_seconds:.1f}s", file=sys.stderr)
    print(result.csv_path)
    return 0 if result.exit_reason in ("completed", "max-steps") else 2


def _state_from_snapshot(path):
    from .evolve import SimState
    from .io import load_snapshot
    cfg, grid, fields, scal, meta = load_snapshot(path)
    state = SimState(cfg=cfg, grid=grid, fields=fields, scal=scal,
                     step_index=meta["step_index"], dtau=meta["dtau"])
    state.refresh()
    return state, meta


def _cmd_diagnose(args) -> int:
    from . import diagnostics as diag
    state, meta = _state_from_snapshot(args.snapshot)
    row = diag.criteria_step(state, meta["prev_row"], full=True)
    out = sys.stdout if args.out in (None, "-") else open(args.out, "w")
    out.write(",".join(diag.COLUMNS) + "\n")
    out.write(",".join(f"{v:.17g}" for v in row.values()) + "\n")
    if out is not sys.stdout:
        out.close()
    return 0


def _cmd_streamlines(args) -> int:
    from .diagnostics import trace_streamlines
    state, _ = _state_from_snapshot(args.snapshot)
    seeds = []
    with open(args.seeds, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            r0, z0 = (float(tok) for tok in line.replace(",", " ").split())
            seeds.append((r0, z0))
    lines = trace_streamlines(state, seeds, arc=args.arc)
    out = sys.stdout if args.out in (None, "-") else open(args.out, "w")
    out.write("seed,point,x,y,z,exited\n")
    for k, sl in enumerate(lines):
        for i, (x, y, z) in enumerate(sl.points):
            out.write(f"{k},{i},{x:.17g},{y:.17g},{z:.17g},{int(sl.exited)}\n")
    if out is not sys.stdout:
        out.close()
    return 0


def _cmd_residual(args) -> int:
    from .diagnostics import selfsim_residual
    state, _ = _state_from_snapshot(args.snapshot)
    c_l = args.c_l if args.c_l is not None else state.scal.c_lz
    nu0 = args.nu0 if args.nu0 is not None else state.cfg.nu0
    print(f"{selfsim_residual(state, c_l, nu0):.17g}")
    return 0


def _cmd_fit(args) -> int:
    from .diagnostics import TimeSeries
    from .scaling import fit_blowup
    hist = TimeSeries.from_csv(args.csv)
    fit = fit_blowup(hist, window_frac=args.window)
    print(f"T = {fit.T:.17g}")
    print(f"c0 = {fit.c0:.17g}")
    print(f"epsilon = {fit.epsilon:.17g}")
    print(f"chat_lz_last = {fit.chat_lz[-1]:.17g}")
    print(f"chat_lr_last = {fit.chat_lr[-1]:.17g}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="axiswirl",
        description="Axisymmetric swirl-flow solver in a two-scale zooming "
                    "frame, with blowup-criteria diagnostics.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="execute a configured run")
    p.add_argument("--config", required=True)
    p.add_argument("--resume", default=None, help="checkpoint to continue from")
    p.add_argument("--out", default=None, help="override output.dir")
    p.set_defaults(fn=_cmd_run)

    p = sub.add_parser("diagnose", help="recompute diagnostics from a snapshot")
    p.add_argument("--snapshot", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(fn=_cmd_diagnose)

    p = sub.add_parser("streamlines", help="trace streamlines from a snapshot")
    p.add_argument("--snapshot", required=True)
    p.add_argument("--seeds", required=True, help="file of r0 z0 pairs")
    p.add_argument("--arc", type=float, default=25.0)
    p.add_argument("--out", default=None)
    p.set_defaults(fn=_cmd_streamlines)

    p = sub.add_parser("residual", help="steady-profile residual of a snapshot")
    p.add_argument("--snapshot", required=True)
    p.add_argument("--c-l", dest="c_l", type=float, default=None)
    p.add_argument("--nu0", type=float, default=None)
    p.set_defaults(fn=_cmd_residual)

    p = sub.add_parser("fit", help="blowup-time fit from a diagnostics CSV")
    p.add_argument("--csv", required=True)
    p.add_argument("--window", type=float, default=0.5)
    p.set_defaults(fn=_cmd_fit)

    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 3
    except AxiswirlError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
