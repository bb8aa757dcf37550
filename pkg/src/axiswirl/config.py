"""Run configuration: typed schema, defaults, and the flat key=value parser.

Config files are plain text, one `key = value` per line, with dotted section
prefixes (model., grid., poisson., time., output.). `#` starts a comment.
Unknown keys are rejected. The full effective configuration (defaults
applied) is echoed into every snapshot header for provenance.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields as dc_fields

from .errors import ConfigError

VARIANTS = ("generalized-nse", "generalized-boussinesq", "classic-nse-u1")
DIMENSION_LAWS = ("nse-law", "boussinesq-law", "fixed")


@dataclass
class GridConfig:
    nxi: int = 256
    neta: int = 256
    xi_max: float = 60.0
    eta_max: float = 30.0
    map_kind: str = "tanh"
    stretch: float = 2.0
    anchor: bool = True
    fix_core_spacing: bool = True
    expand: bool = True
    expand_fraction: float = 0.6


@dataclass
class PoissonConfig:
    tol: float = 1e-10
    max_iter: int = 200
    solver: str = "auto"  # auto | multigrid | cg


@dataclass
class TimeConfig:
    cfl: float = 0.5
    dtau_max: float = 2e-3
    dtau_fixed: float = 0.0   # > 0 forces a constant step
    tau_end: float = 10.0
    max_steps: int = 2_000_000
    strang: bool = False
    rk2: bool = False
    freeze_until: float = 0.0  # controller disabled for tau < freeze_until


@dataclass
class OutputConfig:
    dir: str = "out"
    snapshot_interval: float = 1.0
    checkpoint_every: int = 1000
    diag_stride: int = 1


@dataclass
class ModelConfig:
    variant: str = ""
    nu0: float = 0.006
    nu1: float = 6e-4
    nu2: float = 6e-3
    dimension_law: str = ""   # defaulted from the variant if empty
    n_fixed: float = 3.0
    dimension_relax: float = 0.0  # tau-scale for relaxing n toward the law (0 = instantaneous)
    R0: float = 3.6927
    advection: str = "centered"  # centered | upwind
    controller: bool = True
    track_window: float = 2.5    # peak search window (R0/w..R0*w, 1/w..w); <=1 disables
    symmetric_sector: bool = True
    init: str = "ring"  # ring | swirl | file
    init_file: str = ""
    ring_xi0: float = 3.6927
    ring_eta0: float = 3.3754
    ring_sigma_xi: float = 1.4
    ring_sigma_eta: float = 1.4
    ring_omega_amp: float = 0.0
    ring_omega_xi0: float = 0.0   # 0 -> under the swirl peak
    ring_omega_eta0: float = 0.0  # 0 -> half the swirl peak height
    front_xi: float = 3.0         # circulation-front seed geometry
    front_width: float = 1.2
    front_core: float = 1.2
    cutoff: bool = True
    cutoff_rho: float = 0.0  # 0 -> half the smaller base extent
    cutoff_k: int = 8
    grid: GridConfig = field(default_factory=GridConfig)
    poisson: PoissonConfig = field(default_factory=PoissonConfig)
    time: TimeConfig = field(default_factory=TimeConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    def viscosities(self) -> tuple[float, float]:
        """Base viscosity pair (gamma equation, omega equation)."""
        if self.variant == "generalized-nse":
            return (self.nu0, self.nu0)
        return (self.nu1, self.nu2)


_SECTIONS = {
    "model": (ModelConfig, None),
    "grid": (GridConfig, "grid"),
    "poisson": (PoissonConfig, "poisson"),
    "time": (TimeConfig, "time"),
    "output": (OutputConfig, "output"),
}

# keys whose config-file name differs from the dataclass attribute
_ALIASES = {("grid", "map"): "map_kind"}
_ALIASES_INV = {v: k for k, v in _ALIASES.items()}

_NO_MODEL_KEY = {"grid", "poisson", "time", "output"}  # nested, not flat keys


def _coerce(key: str, raw: str, typ):
    raw = raw.strip()
    try:
        if typ is bool:
            low = raw.lower()
            if low in ("true", "yes", "on", "1"):
                return True
            if low in ("false", "no", "off", "0"):
                return False
            raise ValueError(raw)
        if typ is int:
            return int(raw)
        if typ is float:
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {typ.__name__}") from None


def parse_config(text: str) -> ModelConfig:
    cfg = ModelConfig()
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {line!r}")
        key, raw = (part.strip() for part in line.split("=", 1))
        sect, _, name = key.partition(".")
        if sect not in _SECTIONS or not name:
            raise ConfigError(f"unknown key {key!r}")
        name = _ALIASES.get((sect, name), name)
        target = cfg if sect == "model" else getattr(cfg, sect)
        cls = type(target)
        valid = {f.name: f.type for f in dc_fields(cls) if f.name not in _NO_MODEL_KEY}
        if name not in valid:
            raise ConfigError(f"unknown key {key!r}")
        typ = type(getattr(target, name))
        setattr(target, name, _coerce(key, raw, typ))
    validate_config(cfg)
    return cfg


def validate_config(cfg: ModelConfig) -> None:
    if not cfg.variant:
        raise ConfigError("model.variant must be set explicitly "
                          f"(one of {', '.join(VARIANTS)})")
    if cfg.variant not in VARIANTS:
        raise ConfigError(f"model.variant: unknown variant {cfg.variant!r}")
    if not cfg.dimension_law:
        cfg.dimension_law = {
            "generalized-nse": "nse-law",
            "generalized-boussinesq": "boussinesq-law",
            "classic-nse-u1": "fixed",
        }[cfg.variant]
    if cfg.dimension_law not in DIMENSION_LAWS:
        raise ConfigError(f"model.dimension_law: unknown law {cfg.dimension_law!r}")
    for key in ("nu0", "nu1", "nu2"):
        if getattr(cfg, key) < 0.0:
            raise ConfigError(f"model.{key}: viscosity must be >= 0")
    if cfg.R0 <= 0.0:
        raise ConfigError("model.R0 must be positive")
    if (cfg.variant == "generalized-boussinesq"
            and cfg.dimension_law == "fixed" and cfg.n_fixed >= 7.0):
        raise ConfigError("model.n_fixed: boussinesq energy weight requires n < 7")
    if cfg.variant == "classic-nse-u1" and cfg.dimension_law == "fixed":
        cfg.n_fixed = 3.0
    if cfg.advection not in ("centered", "upwind"):
        raise ConfigError(f"model.advection: unknown scheme {cfg.advection!r}")
    if cfg.init not in ("ring", "swirl", "front", "file"):
        raise ConfigError(f"model.init: unknown initializer {cfg.init!r}")
    if cfg.init == "file" and not cfg.init_file:
        raise ConfigError("model.init_file required when model.init = file")
    g = cfg.grid
    if g.nxi < 16 or g.neta < 16:
        raise ConfigError("grid.nxi and grid.neta must be >= 16")
    if g.xi_max <= 0 or g.eta_max <= 0:
        raise ConfigError("grid extents must be positive")
    if g.map_kind not in ("uniform", "tanh"):
        raise ConfigError(f"grid.map: unknown map kind {g.map_kind!r}")
    if g.stretch < 0:
        raise ConfigError("grid.stretch must be >= 0")
    if not 0.0 < g.expand_fraction < 1.0:
        raise ConfigError("grid.expand_fraction must lie in (0, 1)")
    if cfg.poisson.tol <= 0:
        raise ConfigError("poisson.tol must be positive")
    if cfg.poisson.solver not in ("auto", "multigrid", "cg"):
        raise ConfigError(f"poisson.solver: unknown solver {cfg.poisson.solver!r}")
    t = cfg.time
    if t.cfl <= 0 or t.dtau_max <= 0 or t.tau_end < 0:
        raise ConfigError("time.cfl, time.dtau_max must be positive; tau_end >= 0")
    if cfg.output.diag_stride < 1 or cfg.output.checkpoint_every < 1:
        raise ConfigError("output cadences must be >= 1")


def config_to_text(cfg: ModelConfig) -> str:
    """Serialize the full effective config (round-trips through parse_config)."""
    lines = []
    for f in dc_fields(ModelConfig):
        if f.name in _NO_MODEL_KEY:
            continue
        lines.append(_fmt_kv("model", f.name, getattr(cfg, f.name)))
    for sect in ("grid", "poisson", "time", "output"):
        sub = getattr(cfg, sect)
        for f in dc_fields(type(sub)):
            lines.append(_fmt_kv(sect, f.name, getattr(sub, f.name)))
    return "\n".join(lines) + "\n"


def _fmt_kv(sect: str, name: str, val) -> str:
    alias = _ALIASES_INV.get(name)
    if alias and alias[0] == sect:
        name = alias[1]
    if isinstance(val, bool):
        sval = "true" if val else "false"
    elif isinstance(val, float):
        sval = repr(val)
    else:
        sval = str(val)
    return f"{sect}.{name} = {sval}"
