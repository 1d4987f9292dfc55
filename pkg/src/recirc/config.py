"""Run configuration: a line-oriented ``section.key = value`` text format.

Example::

    # reservoir, coarse
    domain.h = 1.0
    time.N = 96
    physics.b2S = 1.0e-9
    schedule.preset = TTTT
    layout.C1 = left 16.0 17.0
    layout.T1 = bottom 2.0 3.0

Missing keys take the reservoir defaults.  Without any ``layout.*`` key the
four-pair symmetric layout is used; ``layout.pairs = 0`` means no pumps.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError, LayoutError, ScheduleError
from .mesh import SIDES, PumpLayout, PumpPair, Span, default_layout
from .params import DEFAULT_B2S, DEFAULT_M_BOUND, TABLE_DEFAULTS, PhysicalParams, convective_coefficient
from .simulation import PRESET_PATTERNS, PumpSchedule, RadiationProfile, scenario_preset


@dataclass(frozen=True)
class DomainConfig:
    width: float = 16.0
    height: float = 19.0
    h: float = 0.5
    pattern: str = "symmetric"


@dataclass(frozen=True)
class TimeConfig:
    dt: float = 1800.0
    N: int = 96


@dataclass(frozen=True)
class PhysicsConfig:
    nu: float = TABLE_DEFAULTS["nu"]
    nu_tur: float = TABLE_DEFAULTS["nu_tur"]
    K: float = TABLE_DEFAULTS["K"]
    h_N: float = TABLE_DEFAULTS["h_N"]
    h_S: float = TABLE_DEFAULTS["h_S"]
    rho: float = TABLE_DEFAULTS["rho"]
    c_p: float = TABLE_DEFAULTS["c_p"]
    theta0: float = TABLE_DEFAULTS["theta0"]
    theta_S: float = TABLE_DEFAULTS["theta_S"]
    theta_N: float = TABLE_DEFAULTS["theta_N"]
    alpha0: float = TABLE_DEFAULTS["alpha0"]
    b2S: float = DEFAULT_B2S
    M_bound: float = DEFAULT_M_BOUND

    @property
    def b1N(self) -> float:
        return convective_coefficient(self.h_N, self.rho, self.c_p)

    @property
    def b1S(self) -> float:
        return convective_coefficient(self.h_S, self.rho, self.c_p)


@dataclass(frozen=True)
class ScheduleConfig:
    preset: str | None = "NNNN"
    rates: tuple[tuple[float, ...], ...] | None = None

    @property
    def label(self) -> str:
        return self.preset if self.preset else "custom"


@dataclass(frozen=True)
class RadiationConfig:
    mode: str = "synthetic"
    file: str | None = None
    base: float = 278.0
    amplitude: float = 22.0
    period: float = 86400.0


@dataclass(frozen=True)
class SolverConfig:
    picard_tol: float = 1e-8
    picard_max: int = 50
    constraint_tol: float = 1e-9
    radiative: str = "tangent"
    hydro_tol: float = 1e-6
    hydro_max: int = 30
    uzawa_tol: float = 1e-6
    uzawa_max: int = 500
    uzawa_step: float | None = None
    cg_tol: float = 1e-10


@dataclass(frozen=True)
class OutputConfig:
    dir: str = "out"
    snapshot_every: int = 0
    upper_depth: float = 1.5


@dataclass(frozen=True)
class RunConfig:
    domain: DomainConfig = field(default_factory=DomainConfig)
    time: TimeConfig = field(default_factory=TimeConfig)
    physics: PhysicsConfig = field(default_factory=PhysicsConfig)
    layout: PumpLayout | None = None
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    radiation: RadiationConfig = field(default_factory=RadiationConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    base_dir: str = field(default=".", compare=False)

    def __post_init__(self):
        if self.layout is None:
            object.__setattr__(self, "layout", default_layout(self.domain.width, self.domain.height))
        validate(self)

    def physical_params(self) -> PhysicalParams:
        ph = self.physics
        return PhysicalParams(nu=ph.nu, nu_tur=ph.nu_tur, K=ph.K, b1N=ph.b1N, b1S=ph.b1S, b2S=ph.b2S,
                              alpha0=ph.alpha0, theta0=ph.theta0, theta_S=ph.theta_S, theta_N=ph.theta_N,
                              M_bound=ph.M_bound)

    def pump_schedule(self) -> PumpSchedule:
        if self.schedule.preset:
            return scenario_preset(self.schedule.preset, N=self.time.N, dt=self.time.dt)
        return PumpSchedule(np.array(self.schedule.rates, dtype=float).reshape(len(self.schedule.rates), self.time.N),
                            self.time.dt, self.time.N)

    def radiation_profile(self) -> RadiationProfile:
        rad = self.radiation
        if rad.mode == "tabulated":
            path = Path(rad.file)
            if not path.is_absolute():
                path = Path(self.base_dir) / path
            try:
                table = np.loadtxt(path, comments="#", delimiter=None, ndmin=2)
            except OSError as exc:
                raise ConfigError(f"radiation.file: cannot read {path}: {exc}") from None
            except ValueError as exc:
                raise ConfigError(f"radiation.file: {path} is not a two-column table: {exc}") from None
            if table.shape[1] != 2 or len(table) < 1:
                raise ConfigError(f"radiation.file: {path} must have two columns (time_s, T_r_K)")
            return RadiationProfile(times=table[:, 0], values=table[:, 1])
        return RadiationProfile(base=rad.base, amplitude=rad.amplitude, period=rad.period)

    def with_scenario(self, name: str) -> "RunConfig":
        if name.upper() not in PRESET_PATTERNS:
            raise ConfigError(f"schedule: unknown scenario {name!r}")
        return replace(self, schedule=ScheduleConfig(preset=name.upper()))

    def with_output(self, directory: str | None = None, snapshot_every: int | None = None) -> "RunConfig":
        out = self.output
        if directory is not None:
            out = replace(out, dir=directory)
        if snapshot_every is not None:
            out = replace(out, snapshot_every=snapshot_every)
        return replace(self, output=out)


def _require(cond: bool, key: str, msg: str):
    if not cond:
        raise ConfigError(f"{key}: {msg}")


def validate(cfg: RunConfig) -> None:
    d, t = cfg.domain, cfg.time
    for sec in (cfg.domain, cfg.time, cfg.physics, cfg.solver, cfg.radiation, cfg.output):
        for f in fields(sec):
            v = getattr(sec, f.name)
            if isinstance(v, float):
                _require(math.isfinite(v), f"{_section_name(sec)}.{f.name}", "must be finite")
    _require(d.width > 0, "domain.width", "must be positive")
    _require(d.height > 0, "domain.height", "must be positive")
    _require(d.h > 0, "domain.h", "must be positive")
    _require(d.pattern in ("symmetric", "uniform"), "domain.pattern", "must be 'symmetric' or 'uniform'")
    _require(t.dt > 0, "time.dt", "must be positive")
    _require(t.N >= 0, "time.N", "must be non-negative")
    ph = cfg.physics
    _require(ph.nu > 0, "physics.nu", "must be positive")
    _require(ph.K > 0, "physics.K", "must be positive")
    _require(ph.nu_tur >= 0, "physics.nu_tur", "must be non-negative")
    _require(ph.rho > 0 and ph.c_p > 0, "physics.rho", "rho and c_p must be positive")
    _require(ph.h_N >= 0 and ph.h_S >= 0, "physics.h_N", "heat transfer coefficients must be non-negative")
    _require(ph.b2S >= 0, "physics.b2S", "must be non-negative")
    _require(ph.M_bound > 0, "physics.M_bound", "must be positive")
    s = cfg.schedule
    n_ct = cfg.layout.n_pairs
    if s.preset:
        _require(s.preset in PRESET_PATTERNS, "schedule", f"unknown preset {s.preset!r}")
        _require(n_ct == 4, "schedule", f"presets need 4 pump pairs, layout has {n_ct}")
    else:
        _require(s.rates is not None, "schedule", "give a preset or per-pump rates")
        _require(len(s.rates) == n_ct, "schedule", f"{len(s.rates)} rate rows for {n_ct} pump pairs")
        for row in s.rates:
            _require(len(row) == t.N, "schedule", f"rate rows must have N = {t.N} entries")
            _require(all(abs(g) <= ph.M_bound for g in row), "schedule", f"rates exceed M_bound = {ph.M_bound}")
    _require(cfg.radiation.mode in ("synthetic", "tabulated"), "radiation.mode", "must be synthetic or tabulated")
    if cfg.radiation.mode == "tabulated":
        _require(bool(cfg.radiation.file), "radiation.file", "required for tabulated radiation")
    sv = cfg.solver
    _require(sv.radiative in ("tangent", "lagged"), "solver.radiative", "must be tangent or lagged")
    for key in ("picard_tol", "constraint_tol", "hydro_tol", "uzawa_tol", "cg_tol"):
        _require(getattr(sv, key) > 0, f"solver.{key}", "must be positive")
    _require(sv.uzawa_step is None or sv.uzawa_step > 0, "solver.uzawa_step", "must be positive")
    o = cfg.output
    _require(o.snapshot_every >= 0, "output.snapshot_every", "must be non-negative")
    _require(0 < o.upper_depth <= d.height, "output.upper_depth", "must lie in (0, height]")
    try:
        cfg.layout.check_fits(d.width, d.height)
    except LayoutError as exc:
        raise ConfigError(f"layout: {exc}") from None


_SECTIONS = {
    "domain": DomainConfig, "time": TimeConfig, "physics": PhysicsConfig, "schedule": ScheduleConfig,
    "radiation": RadiationConfig, "solver": SolverConfig, "output": OutputConfig,
}


def _section_name(obj) -> str:
    for name, cls in _SECTIONS.items():
        if isinstance(obj, cls):
            return name
    return "?"


_LINE = re.compile(r"^\s*([A-Za-z_]+)\.([A-Za-z_0-9]+)\s*=\s*(.*?)\s*$")


def _convert(cls, key: str, raw: str, lineno: int):
    ftypes = {f.name: f.type for f in fields(cls)}
    if key not in ftypes:
        raise ConfigError(f"line {lineno}: unknown key {_SECTIONS_INV[cls]}.{key}")
    typ = str(ftypes[key])
    try:
        if raw.lower() in ("none", "") and "None" in typ:
            return None
        if typ.startswith("int"):
            return int(raw)
        if typ.startswith("float"):
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"line {lineno}: {_SECTIONS_INV[cls]}.{key}: cannot parse {raw!r}") from None


_SECTIONS_INV = {cls: name for name, cls in _SECTIONS.items()}


def parse_config(text: str, base_dir: str = ".") -> RunConfig:
    values: dict[str, dict] = {name: {} for name in _SECTIONS}
    layout_spans: dict[str, Span] = {}
    layout_pairs = None
    surface = "top"
    rate_rows: dict[int, tuple[int, str]] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0]
        if not line.strip():
            continue
        m = _LINE.match(line)
        if not m:
            raise ConfigError(f"line {lineno}: expected 'section.key = value', got {line.strip()!r}")
        section, key, raw = m.groups()
        if section == "layout":
            if key == "surface":
                surface = raw
            elif key == "pairs":
                try:
                    layout_pairs = int(raw)
                except ValueError:
                    raise ConfigError(f"line {lineno}: layout.pairs: cannot parse {raw!r}") from None
            elif re.fullmatch(r"[CT][1-9][0-9]*", key):
                parts = raw.split()
                try:
                    if len(parts) != 3 or parts[0] not in SIDES:
                        raise ValueError
                    layout_spans[key] = Span(parts[0], float(parts[1]), float(parts[2]))
                except (ValueError, LayoutError) as exc:
                    raise ConfigError(f"line {lineno}: layout.{key}: expected '<side> <start> <end>' "
                                      f"with side in {SIDES}, got {raw!r} {exc}") from None
            else:
                raise ConfigError(f"line {lineno}: unknown key layout.{key}")
            continue
        if section == "schedule" and re.fullmatch(r"g[1-9][0-9]*", key):
            rate_rows[int(key[1:])] = (lineno, raw)
            continue
        if section not in _SECTIONS:
            raise ConfigError(f"line {lineno}: unknown section {section!r}")
        values[section][key] = _convert(_SECTIONS[section], key, raw, lineno)

    domain = DomainConfig(**values["domain"])
    time = TimeConfig(**values["time"])

    if layout_spans or layout_pairs is not None:
        n = layout_pairs if layout_pairs is not None else len(layout_spans) // 2
        expected = {f"{kind}{k}" for k in range(1, n + 1) for kind in "CT"}
        if set(layout_spans) != expected:
            raise ConfigError(f"layout: expected spans {sorted(expected)}, got {sorted(layout_spans)}")
        try:
            layout = PumpLayout(tuple(PumpPair(layout_spans[f"C{k}"], layout_spans[f"T{k}"])
                                      for k in range(1, n + 1)), surface_side=surface)
        except LayoutError as exc:
            raise ConfigError(f"layout: {exc}") from None
    else:
        try:
            base = default_layout(domain.width, domain.height)
            layout = PumpLayout(base.pairs, surface_side=surface)
        except LayoutError as exc:
            raise ConfigError(f"layout: {exc}") from None

    sched = dict(values["schedule"])
    if rate_rows:
        if sched.get("preset"):
            raise ConfigError("schedule: give either a preset or g<k> rows, not both")
        if sorted(rate_rows) != list(range(1, len(rate_rows) + 1)):
            raise ConfigError(f"schedule: rate rows must be g1..g{len(rate_rows)}")
        rows = []
        for k in sorted(rate_rows):
            lineno, raw = rate_rows[k]
            try:
                row = tuple(float(x) for x in raw.replace(",", " ").split())
            except ValueError:
                raise ConfigError(f"line {lineno}: schedule.g{k}: cannot parse {raw!r}") from None
            if len(row) == 1:
                row = row * time.N
            rows.append(row)
        sched = {"preset": None, "rates": tuple(rows)}
    elif "preset" in sched and sched["preset"]:
        sched["preset"] = sched["preset"].upper()

    try:
        return RunConfig(domain=domain, time=time, physics=PhysicsConfig(**values["physics"]), layout=layout,
                         schedule=ScheduleConfig(**sched), radiation=RadiationConfig(**values["radiation"]),
                         solver=SolverConfig(**values["solver"]), output=OutputConfig(**values["output"]),
                         base_dir=base_dir)
    except ScheduleError as exc:
        raise ConfigError(f"schedule: {exc}") from None


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, base_dir=str(path.parent))


def _fmt(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def dump_config(cfg: RunConfig) -> str:
    """Serialise every key; ``parse_config(dump_config(c)) == c``."""
    lines = []
    for name, sec in (("domain", cfg.domain), ("time", cfg.time), ("physics", cfg.physics),
                      ("radiation", cfg.radiation), ("solver", cfg.solver), ("output", cfg.output)):
        for f in fields(sec):
            lines.append(f"{name}.{f.name} = {_fmt(getattr(sec, f.name))}")
    lines.append(f"layout.surface = {cfg.layout.surface_side}")
    lines.append(f"layout.pairs = {cfg.layout.n_pairs}")
    for tag, span in cfg.layout.spans():
        lines.append(f"layout.{tag} = {span.side} {span.start!r} {span.end!r}")
    if cfg.schedule.preset:
        lines.append(f"schedule.preset = {cfg.schedule.preset}")
    else:
        lines.append("schedule.preset = none")
        for k, row in enumerate(cfg.schedule.rates, start=1):
            lines.append(f"schedule.g{k} = " + ", ".join(repr(float(g)) for g in row))
    return "\n".join(lines) + "\n"
