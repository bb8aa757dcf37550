"""Snapshot/checkpoint serialization and the diagnostics CSV stream.

Snapshot layout: a text header of `key = value` lines (floats stored with
repr for exact round-trip), a sha256 line for the payload, a `---` separator,
then the three prognostic arrays plus psi1 as little-endian float64,
row-major with eta fastest. Checkpoints are snapshots that also carry the
integral accumulators and loop counters needed for bit-identical resumption.
"""

from __future__ import annotations

import hashlib
import io as _io
from dataclasses import fields as dc_fields

import numpy as np

from .config import ModelConfig, config_to_text, parse_config
from .diagnostics import COLUMNS, DiagRow
from .errors import SnapshotFormatError
from .fields import FieldSet, u1_from_gamma
from .grid import Grid, make_grid
from .scaling import ScalingState

MAGIC = "AXISWIRL-SNAP"
VERSION = 1

_PAYLOAD_FIELDS = ("gamma", "omega1", "psi1")


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _parse_scalar(s: str):
    s = s.strip()
    if s == "true":
        return True
    if s == "false":
        return False
    if s == "none":
        return None
    try:
        return int(s)
    except ValueError:
        pass
    try:
        return float(s)
    except ValueError:
        return s


def write_snapshot(cfg: ModelConfig, grid: Grid, fields: FieldSet,
                   scal: ScalingState, step_index: int = 0, dtau: float = 0.0,
                   prev_row: DiagRow | None = None,
                   extras: dict | None = None) -> bytes:
    payload = b"".join(
        np.ascontiguousarray(getattr(fields, name), dtype="<f8").tobytes()
        for name in _PAYLOAD_FIELDS)
    lines = [f"{MAGIC} {VERSION}"]
    lines.append(f"shape = {grid.nxi} {grid.neta}")
    lines.append(f"grid.map = {grid.xi_map.kind}")
    lines.append(f"grid.xi_extent = {_fmt(grid.xi_map.extent)}")
    lines.append(f"grid.eta_extent = {_fmt(grid.eta_map.extent)}")
    lines.append(f"grid.beta_xi = {_fmt(grid.xi_map.beta)}")
    lines.append(f"grid.beta_eta = {_fmt(grid.eta_map.beta)}")
    lines.append(f"grid.anchor_xi = {_fmt(grid.anchor_xi) if grid.anchor_xi is not None else 'none'}")
    lines.append(f"grid.anchor_eta = {_fmt(grid.anchor_eta) if grid.anchor_eta is not None else 'none'}")
    lines.append(f"grid.base_xi = {_fmt(grid.base_xi)}")
    lines.append(f"grid.base_eta = {_fmt(grid.base_eta)}")
    lines.append(f"grid.core_dxi = {_fmt(grid.core_dxi) if grid.core_dxi is not None else 'none'}")
    for f in dc_fields(ScalingState):
        lines.append(f"scal.{f.name} = {_fmt(getattr(scal, f.name))}")
    lines.append(f"loop.step_index = {step_index}")
    lines.append(f"loop.dtau = {_fmt(float(dtau))}")
    if prev_row is not None:
        for col in COLUMNS:
            lines.append(f"row.{col} = {_fmt(float(getattr(prev_row, col)))}")
        for key, val in sorted(prev_row.integrands.items()):
            lines.append(f"rowint.{key} = {_fmt(float(val))}")
    for key, val in sorted((extras or {}).items()):
        lines.append(f"extra.{key} = {_fmt(val)}")
    for cfg_line in config_to_text(cfg).strip().splitlines():
        lines.append(f"cfg.{cfg_line}")
    lines.append(f"payload-sha256 = {hashlib.sha256(payload).hexdigest()}")
    lines.append("---")
    header = ("\n".join(lines) + "\n").encode("utf-8")
    return header + payload


def read_snapshot(blob: bytes):
    """Parse a snapshot; returns (cfg, grid, fields, scal, meta) where meta
    carries step_index, dtau, prev_row, and any extras."""
    sep = blob.find(b"\n---\n")
    if sep < 0:
        raise SnapshotFormatError("missing header/payload separator")
    header = blob[:sep].decode("utf-8").splitlines()
    payload = blob[sep + 5:]
    if not header or not header[0].startswith(MAGIC):
        raise SnapshotFormatError("not a snapshot (bad magic)")
    try:
        version = int(header[0].split()[1])
    except (IndexError, ValueError):
        raise SnapshotFormatError("malformed version line") from None
    if version != VERSION:
        raise SnapshotFormatError(f"unsupported snapshot version {version}")

    kv: dict[str, str] = {}
    cfg_lines = []
    for line in header[1:]:
        if not line.strip():
            continue
        key, _, val = line.partition(" = ")
        if not _:
            raise SnapshotFormatError(f"malformed header line {line!r}")
        if key.startswith("cfg."):
            cfg_lines.append(f"{key[4:]} = {val}")
        else:
            kv[key] = val

    digest = kv.get("payload-sha256")
    if digest is None:
        raise SnapshotFormatError("missing payload checksum")
    if hashlib.sha256(payload).hexdigest() != digest:
        raise SnapshotFormatError("payload checksum mismatch (truncated or corrupt)")

    nxi, neta = (int(tok) for tok in kv["shape"].split())
    expected = 3 * (nxi + 1) * (neta + 1) * 8
    if len(payload) != expected:
        raise SnapshotFormatError(
            f"payload length {len(payload)} != expected {expected}")

    cfg = parse_config("\n".join(cfg_lines))
    anchor_xi = _parse_scalar(kv["grid.anchor_xi"])
    anchor_eta = _parse_scalar(kv["grid.anchor_eta"])
    core = _parse_scalar(kv["grid.core_dxi"])
    grid = make_grid(nxi, neta,
                     float(kv["grid.xi_extent"]), float(kv["grid.eta_extent"]),
                     map_kind=kv["grid.map"].strip(),
                     stretch=float(kv["grid.beta_xi"]),
                     anchor_xi=anchor_xi, anchor_eta=anchor_eta,
                     base_xi=float(kv["grid.base_xi"]),
                     base_eta=float(kv["grid.base_eta"]),
                     core_dxi=core, snap=False)

    count = (nxi + 1) * (neta + 1)
    arrs = []
    for k in range(3):
        a = np.frombuffer(payload[k * count * 8:(k + 1) * count * 8], dtype="<f8")
        arrs.append(a.reshape(nxi + 1, neta + 1).copy())
    gamma, omega1, psi1 = arrs
    u1 = u1_from_gamma(gamma, grid)
    z = np.zeros_like(gamma)
    fields = FieldSet(gamma=gamma, omega1=omega1, psi1=psi1, u1=u1,
                      uxi=z.copy(), ueta=z.copy())

    scal = ScalingState()
    for f in dc_fields(ScalingState):
        setattr(scal, f.name, type(getattr(scal, f.name))(float(kv[f"scal.{f.name}"])))

    prev_row = None
    if any(k.startswith("row.") for k in kv):
        prev_row = DiagRow()
        for col in COLUMNS:
            setattr(prev_row, col, float(kv[f"row.{col}"]))
        prev_row.integrands = {k[7:]: float(v) for k, v in kv.items()
                               if k.startswith("rowint.")}
    meta = {
        "step_index": int(kv.get("loop.step_index", 0)),
        "dtau": float(kv.get("loop.dtau", 0.0)),
        "prev_row": prev_row,
        "extras": {k[6:]: _parse_scalar(v) for k, v in kv.items()
                   if k.startswith("extra.")},
    }
    return cfg, grid, fields, scal, meta


def save_snapshot(path, *args, **kwargs) -> None:
    blob = write_snapshot(*args, **kwargs)
    with open(path, "wb") as fh:
        fh.write(blob)


def load_snapshot(path):
    with open(path, "rb") as fh:
        return read_snapshot(fh.read())


class DiagCsv:
    """Append-only CSV stream with one row per diagnostics record."""

    def __init__(self, path):
        self.path = path
        self._fh = open(path, "w", encoding="utf-8", newline="\n")
        self._fh.write(",".join(COLUMNS) + "\n")
        self._fh.flush()

    def append(self, row: DiagRow) -> None:
        self._fh.write(",".join(f"{v:.17g}" for v in row.values()) + "\n")
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
