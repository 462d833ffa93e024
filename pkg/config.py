import json
import os
import re
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import yaml

from dispersion import (
    PhysicalParams,
    build_form_factor,
    build_interaction,
    build_model as build_dispersion_model,
)
from errors import ConfigValidationError, ConfigurationError, LabError
from evolution import MODES, EvolutionConfig
from grid import DensityField, MomentumGrid, make_grid
from kinetics import RATE_DISPERSIONS, ReservoirSpec
from snapshot_store import load_density

EXPERIMENTS = (
    "dispersion-sweep",
    "bogoliubov-sweep",
    "condense",
    "landau",
    "evolve",
    "check-superfluid",
)
DISPERSION_KINDS = ("free", "bogoliubov", "radiative", "polaron", "tabulated")
INITIAL_STATES = ("gaussian", "shell", "zero", "file")
REPORT_FORMATS = ("markdown", "html")


@dataclass
class PhysicsConfig:
    m: float = 1.0
    beta: float = 1.0
    gamma: float = 0.0
    rho: float = 1.0
    interaction: Dict[str, Any] = field(default_factory=lambda: {"kind": "constant", "g0": 1.0})
    form_factor: Dict[str, Any] = field(default_factory=lambda: {"kind": "constant", "value": 1.0})


@dataclass
class DispersionConfig:
    kind: str = "radiative"
    c: float = 1.0
    omega0: float = 1.0
    path: Optional[str] = None


@dataclass
class GridConfig:
    d: int = 1
    q_max: float = 4.0
    N: int = 256


@dataclass
class EvolutionSection:
    dt: float = 0.01
    t_end: float = 1.0
    sigma_E: Optional[float] = None
    mode: str = "nonlinear"
    record_every: int = 10
    retain_unit_occupation: bool = False
    progress: bool = True


@dataclass
class ReservoirConfig:
    beta: Optional[float] = None  # defaults to physics.beta
    occupation: float = 0.0
    rate_dispersion: str = "excitation"


@dataclass
class InitialStateConfig:
    # gaussian: amplitude * exp(-|q - center|^2 / 2 width^2), cut at |q - center| <= radius
    # shell: same profile in |q| around `shell_radius`
    kind: str = "gaussian"
    amplitude: float = 1.0
    center: List[float] = field(default_factory=lambda: [0.0])
    width: float = 0.3
    radius: Optional[float] = 0.8
    shell_radius: float = 2.0
    path: Optional[str] = None


@dataclass
class SweepConfig:
    k_max: float = 4.0
    points: int = 200
    omega_range: Tuple[float, float] = (1e-3, 1e3)
    t_range: Tuple[float, float] = (1e-3, 1e3)
    sweep_points: int = 100


@dataclass
class CondenseConfig:
    temperatures: Optional[List[float]] = None  # default: count points up to theta_c
    count: int = 16


@dataclass
class LandauConfig:
    k_min: float = 1e-4
    k_max: float = 10.0
    points: int = 400
    velocity: Optional[List[float]] = None


@dataclass
class CheckConfig:
    tol: float = 1e-6
    sigma_E: Optional[float] = None


@dataclass
class RunConfig:
    experiment: str = "landau"
    output_dir: str = "output"
    physics: PhysicsConfig = field(default_factory=PhysicsConfig)
    dispersion: DispersionConfig = field(default_factory=DispersionConfig)
    grid: GridConfig = field(default_factory=GridConfig)
    evolution: EvolutionSection = field(default_factory=EvolutionSection)
    reservoir: ReservoirConfig = field(default_factory=ReservoirConfig)
    initial_state: InitialStateConfig = field(default_factory=InitialStateConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    condense: CondenseConfig = field(default_factory=CondenseConfig)
    landau: LandauConfig = field(default_factory=LandauConfig)
    check: CheckConfig = field(default_factory=CheckConfig)
    report_format: str = "markdown"
    workers: int = 1

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    # builders -----------------------------------------------------------------

    def build_params(self) -> PhysicalParams:
        p = self.physics
        return PhysicalParams(
            m=p.m,
            beta=p.beta,
            gamma=p.gamma,
            rho=p.rho,
            g=build_interaction(p.interaction),
            f=build_form_factor(p.form_factor),
        )

    def build_model(self, params: PhysicalParams):
        return build_dispersion_model(asdict(self.dispersion), params)

    def build_grid(self) -> MomentumGrid:
        return make_grid(self.grid.d, self.grid.q_max, self.grid.N)

    def build_evolution(self) -> EvolutionConfig:
        e = self.evolution
        return EvolutionConfig(
            dt=e.dt,
            t_end=e.t_end,
            sigma_E=e.sigma_E,
            mode=e.mode,
            record_every=e.record_every,
            retain_unit_occupation=e.retain_unit_occupation,
            progress=e.progress,
        )

    def build_reservoir(self, model, params: PhysicalParams) -> ReservoirSpec:
        r = self.reservoir
        return ReservoirSpec(
            beta=params.beta if r.beta is None else r.beta,
            occupation=r.occupation,
            dispersion=model,
            rate_dispersion=r.rate_dispersion,
        )

    def build_initial_state(self, grid: MomentumGrid) -> DensityField:
        s = self.initial_state
        if s.kind == "zero":
            return DensityField.zeros(grid)
        if s.kind == "file":
            return load_density(s.path, grid)

        if s.kind == "shell":
            distance = np.abs(grid.norms - s.shell_radius)
        else:
            center = np.atleast_1d(np.asarray(s.center, dtype=float))
            if center.size not in (1, grid.d):
                raise ConfigurationError(
                    f"initial_state.center needs 1 or {grid.d} components, got {center.size}", "grid"
                )
            center = np.broadcast_to(center, (grid.d,))
            distance = np.linalg.norm(grid.nodes - center, axis=-1)
        values = s.amplitude * np.exp(-0.5 * (distance / s.width) ** 2)
        if s.radius is not None:
            values = np.where(distance <= s.radius, values, 0.0)
        return DensityField(grid, values)


@dataclass(frozen=True)
class Diagnostic:
    module: str
    field: str
    message: str
    line: Optional[int] = None

    def __str__(self) -> str:
        where = f"line {self.line}: " if self.line is not None else ""
        return f"{where}[{self.module}] {self.field}: {self.message}"


# loading ----------------------------------------------------------------------


def read_raw(path: str) -> Tuple[Dict[str, Any], str]:
    """Parses a JSON (or .yaml/.yml) config; parse errors carry the file line."""
    with open(path, "r", encoding="utf-8") as f:
        text = f.read()

    if path.endswith((".yaml", ".yml")):
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as e:
            mark = getattr(e, "problem_mark", None)
            line = mark.line + 1 if mark is not None else None
            raise ConfigValidationError(
                f"{path}:{line}: YAML parse error",
                [Diagnostic("config", "<file>", str(e).splitlines()[0], line)],
            ) from e
    else:
        try:
            data = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigValidationError(
                f"{path}:{e.lineno}: {e.msg}",
                [Diagnostic("config", "<file>", e.msg, e.lineno)],
            ) from e

    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigValidationError(
            f"{path}: top level must be a mapping",
            [Diagnostic("config", "<file>", "top level must be a mapping", 1)],
        )
    return data, text


def locate(text: str, dotted: str) -> Optional[int]:
    """1-based line of a (possibly nested) key in the config text."""
    if not text:
        return None
    lines = text.splitlines()
    start = 0
    found = None
    for part in dotted.split("."):
        pattern = re.compile(r"""(^|[\s{,])["']?""" + re.escape(part) + r"""["']?\s*:""")
        for index in range(start, len(lines)):
            if pattern.search(lines[index]):
                found = index
                start = index
                break
        else:
            return found + 1 if found is not None else None
    return found + 1 if found is not None else None


class _Checker:
    def __init__(self, raw: Dict[str, Any], text: str):
        self.raw = raw
        self.text = text
        self.diagnostics: List[Diagnostic] = []

    def fail(self, module: str, dotted: str, message: str):
        self.diagnostics.append(Diagnostic(module, dotted, message, locate(self.text, dotted)))

    def section(self, name: str) -> Dict[str, Any]:
        value = self.raw.get(name, {})
        if value is None:
            return {}
        if not isinstance(value, dict):
            self.fail("config", name, "must be a mapping")
            return {}
        return value

    def number(self, module, section, data, key, kind=float, rule=None, message=""):
        if key not in data or data[key] is None:
            return None
        dotted = f"{section}.{key}" if section else key
        try:
            value = kind(data[key])
            if kind is int and float(data[key]) != value:
                raise ValueError
        except (TypeError, ValueError):
            self.fail(module, dotted, f"must be {'an integer' if kind is int else 'a number'}")
            return None
        if rule is not None and not rule(value):
            self.fail(module, dotted, message)
        return value

    def choice(self, module, section, data, key, options):
        if key in data and data[key] not in options:
            dotted = f"{section}.{key}" if section else key
            self.fail(module, dotted, f"must be one of {', '.join(options)}; got {data[key]!r}")


def collect_diagnostics(raw: Dict[str, Any], text: str = "") -> List[Diagnostic]:
    """Every violated rule of a raw config, in file order where locatable."""
    c = _Checker(raw, text)

    known = {f for f in RunConfig.__dataclass_fields__}
    for key in raw:
        if key not in known:
            c.fail("config", key, "unknown setting")
        elif key in SECTIONS and isinstance(raw[key], dict):
            fields = SECTIONS[key].__dataclass_fields__
            for sub in raw[key]:
                if sub not in fields:
                    c.fail("config", f"{key}.{sub}", "unknown setting")

    c.choice("cli", "", raw, "experiment", EXPERIMENTS)
    c.choice("cli", "", raw, "report_format", REPORT_FORMATS)
    c.number("cli", "", raw, "workers", int, lambda v: v >= 1, "must be >= 1")
    if "output_dir" in raw:
        parent = os.path.abspath(str(raw["output_dir"]))
        while not os.path.exists(parent):
            parent = os.path.dirname(parent)
        if not os.access(parent, os.W_OK):
            c.fail("cli", "output_dir", "output directory is not writable")

    grid = c.section("grid")
    d = c.number("grid", "grid", grid, "d", int, lambda v: v in (1, 2, 3), "dimension must be 1, 2 or 3")
    c.number("grid", "grid", grid, "q_max", float, lambda v: v > 0, "q_max must be positive")
    c.number(
        "grid", "grid", grid, "N", int, lambda v: v >= 2 and v % 2 == 0,
        "points per axis must be even and >= 2",
    )

    physics = c.section("physics")
    c.number("dispersion", "physics", physics, "m", float, lambda v: v > 0, "mass must be positive")
    c.number("dispersion", "physics", physics, "beta", float, lambda v: v > 0, "inverse temperature must be positive")
    gamma = c.number("dispersion", "physics", physics, "gamma", float, lambda v: v >= 0, "coupling must be >= 0")
    c.number("condensation", "physics", physics, "rho", float, lambda v: v > 0, "density must be positive")
    for key in ("interaction", "form_factor"):
        entry = physics.get(key)
        if entry is None:
            continue
        try:
            built = (build_interaction if key == "interaction" else build_form_factor)(entry)
        except (ConfigurationError, TypeError, ValueError, AttributeError) as e:
            c.fail("dispersion", f"physics.{key}", str(e))
            continue
        if key == "interaction" and gamma is not None and gamma > 0 and not built.at_zero > 0:
            c.fail("dispersion", "physics.interaction", "g(0) must be positive when gamma > 0")

    dispersion = c.section("dispersion")
    c.choice("dispersion", "dispersion", dispersion, "kind", DISPERSION_KINDS)
    c.number("dispersion", "dispersion", dispersion, "c", float, lambda v: v > 0, "sound speed must be positive")
    c.number("dispersion", "dispersion", dispersion, "omega0", float, lambda v: v > 0, "gap must be positive")
    if dispersion.get("kind") == "tabulated":
        path = dispersion.get("path")
        if not path or not os.path.exists(str(path)):
            c.fail("dispersion", "dispersion.path", "tabulated dispersion file not found")

    evolution = c.section("evolution")
    c.number("kinetics", "evolution", evolution, "dt", float, lambda v: v > 0, "time step must be positive")
    c.number("kinetics", "evolution", evolution, "t_end", float, lambda v: v >= 0, "t_end must be >= 0")
    c.number(
        "kinetics", "evolution", evolution, "sigma_E", float, lambda v: v > 0,
        "mollifier width sigma_E must be positive",
    )
    c.choice("kinetics", "evolution", evolution, "mode", MODES)
    c.number("kinetics", "evolution", evolution, "record_every", int, lambda v: v >= 1, "must be >= 1")

    check = c.section("check")
    c.number(
        "kinetics", "check", check, "sigma_E", float, lambda v: v > 0,
        "mollifier width sigma_E must be positive",
    )
    c.number("kinetics", "check", check, "tol", float, lambda v: 0 <= v < 1, "tolerance must be in [0, 1)")

    reservoir = c.section("reservoir")
    c.number("kinetics", "reservoir", reservoir, "beta", float, lambda v: v > 0, "inverse temperature must be positive")
    c.number("kinetics", "reservoir", reservoir, "occupation", float, lambda v: v >= 0, "occupation N(p) must be >= 0")
    c.choice("kinetics", "reservoir", reservoir, "rate_dispersion", RATE_DISPERSIONS)

    state = c.section("initial_state")
    c.choice("grid", "initial_state", state, "kind", INITIAL_STATES)
    c.number("grid", "initial_state", state, "amplitude", float, lambda v: v >= 0, "density must be >= 0")
    c.number("grid", "initial_state", state, "width", float, lambda v: v > 0, "width must be positive")
    c.number("grid", "initial_state", state, "radius", float, lambda v: v > 0, "cut radius must be positive")
    if "d" not in grid:
        d = GridConfig.d
    if "center" in state:
        center = state["center"]
        center = center if isinstance(center, list) else [center]
        if d is not None and len(center) not in (1, d):
            c.fail("grid", "initial_state.center", f"needs 1 or {d} components")
    if state.get("kind") == "file" and not os.path.exists(str(state.get("path"))):
        c.fail("grid", "initial_state.path", "density file not found")

    landau = c.section("landau")
    k_min = c.number("landau", "landau", landau, "k_min", float, lambda v: v > 0, "k_min must be positive")
    k_max = c.number("landau", "landau", landau, "k_max", float, lambda v: v > 0, "k_max must be positive")
    if k_min is not None and k_max is not None and not k_min < k_max:
        c.fail("landau", "landau.k_max", "k_max must exceed k_min")
    c.number("landau", "landau", landau, "points", int, lambda v: v >= 2, "needs >= 2 points")

    condense = c.section("condense")
    c.number("condensation", "condense", condense, "count", int, lambda v: v >= 1, "needs >= 1 temperature")
    temps = condense.get("temperatures")
    if temps is not None:
        try:
            if any(float(t) < 0 for t in temps):
                c.fail("condensation", "condense.temperatures", "temperatures must be >= 0")
        except (TypeError, ValueError):
            c.fail("condensation", "condense.temperatures", "must be a list of numbers")

    sweep = c.section("sweep")
    c.number("dispersion", "sweep", sweep, "k_max", float, lambda v: v > 0, "k_max must be positive")
    c.number("dispersion", "sweep", sweep, "points", int, lambda v: v >= 2, "needs >= 2 points")
    c.number("bogoliubov", "sweep", sweep, "sweep_points", int, lambda v: v >= 2, "needs >= 2 points")

    _check_build(c, raw)
    c.diagnostics.sort(key=lambda diag: (diag.line is None, diag.line or 0))
    return c.diagnostics


_BUILD_ERRORS = (LabError, TypeError, ValueError, OSError)


def _check_build(c: _Checker, raw: Dict[str, Any]):
    """Builds what a run builds, so rules spanning several settings are reported too."""
    flagged = {diag.field.split(".")[0] for diag in c.diagnostics}

    def attempt(module: str, dotted: str, build):
        try:
            return build()
        except _BUILD_ERRORS as e:
            if dotted.split(".")[0] not in flagged:
                c.fail(module, dotted, str(e))
            return None

    try:
        cfg = from_dict(raw)
    except (TypeError, ValueError, AttributeError) as e:
        if not c.diagnostics:
            c.fail("config", "<file>", f"cannot build the run: {e}")
        return

    params = attempt("dispersion", "physics", cfg.build_params)
    if params is None:
        return
    dotted = "dispersion.path" if cfg.dispersion.kind == "tabulated" else "dispersion"
    model = attempt("dispersion", dotted, lambda: cfg.build_model(params))
    if cfg.experiment not in ("evolve", "check-superfluid"):
        return
    grid = attempt("grid", "grid", cfg.build_grid)
    if grid is not None:
        attempt("grid", "initial_state", lambda: cfg.build_initial_state(grid))
    if cfg.experiment == "evolve":
        attempt("kinetics", "evolution", cfg.build_evolution)
    if model is not None:
        attempt("kinetics", "reservoir", lambda: cfg.build_reservoir(model, params))


def _coerce(section_cls, data: Dict[str, Any]):
    """Builds a section dataclass, coercing numbers to the declared defaults' types."""
    defaults = section_cls()
    values = {}
    for name, value in data.items():
        current = getattr(defaults, name)
        if value is None or isinstance(current, (dict, list)) or current is None:
            values[name] = value
        elif isinstance(current, bool):
            values[name] = bool(value)
        elif isinstance(current, int):
            values[name] = int(value)
        elif isinstance(current, float):
            values[name] = float(value)
        elif isinstance(current, tuple):
            values[name] = tuple(float(v) for v in value)
        else:
            values[name] = value
    return section_cls(**values)


SECTIONS = {
    "physics": PhysicsConfig,
    "dispersion": DispersionConfig,
    "grid": GridConfig,
    "evolution": EvolutionSection,
    "reservoir": ReservoirConfig,
    "initial_state": InitialStateConfig,
    "sweep": SweepConfig,
    "condense": CondenseConfig,
    "landau": LandauConfig,
    "check": CheckConfig,
}

# optional numeric fields whose default is None
_OPTIONAL_FLOATS = {("evolution", "sigma_E"), ("check", "sigma_E"), ("reservoir", "beta"), ("initial_state", "radius")}


def from_dict(raw: Dict[str, Any]) -> RunConfig:
    config = RunConfig()
    for name, value in raw.items():
        if name in SECTIONS:
            data = dict(value or {})
            for key in list(data):
                if (name, key) in _OPTIONAL_FLOATS and data[key] is not None:
                    data[key] = float(data[key])
            setattr(config, name, _coerce(SECTIONS[name], data))
        elif name == "workers":
            config.workers = int(value)
        else:
            setattr(config, name, value)
    return config


def load_config(path: str) -> RunConfig:
    raw, text = read_raw(path)
    diagnostics = collect_diagnostics(raw, text)
    if diagnostics:
        raise ConfigValidationError(
            f"{path}: {len(diagnostics)} invalid setting(s)", diagnostics
        )
    return from_dict(raw)
