"""Run configuration: INI schema, validation, lossless round trips.

A run is described by one INI file. Every key has a default, so a
config file only lists what differs; parsing resolves the full set and
``config_text`` writes it back out. The same resolved listing is
embedded as a comment block in every output file, which makes each CSV
self-describing.

Floats are serialized with ``repr``, whose shortest round-trip decimal
guarantees ``parse(config_text(cfg)) == cfg`` bit for bit.
"""

from __future__ import annotations

import configparser
import dataclasses
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Union

from .forward import InitialConditionSpec, steps_for
from .model import ModelParams
from .optimal import DescentSettings
from .timestepping import SolverSettings


class ConfigError(ValueError):
    """Unusable run configuration (syntax, unknown key, bad value)."""


def _positive(name: str, value) -> None:
    if not (isinstance(value, (int, float)) and math.isfinite(value)
            and value > 0):
        raise ValueError(f"{name} must be positive, got {value!r}")


def _nonnegative(name: str, value) -> None:
    if not (isinstance(value, (int, float)) and math.isfinite(value)
            and value >= 0):
        raise ValueError(f"{name} must be nonnegative, got {value!r}")


@dataclass(frozen=True)
class GridSection:
    """Square domain discretization and export lattice resolution."""

    elements: int = 64
    side: float = 3000.0
    lattice: int = 65

    def __post_init__(self):
        if self.elements < 2:
            raise ValueError(f"elements must be >= 2, got {self.elements}")
        _positive("side", self.side)
        if self.lattice < 2:
            raise ValueError(f"lattice must be >= 2, got {self.lattice}")


@dataclass(frozen=True)
class TimeSection:
    """Treatment window, step size, and untreated growth lead-in."""

    dt: float = 0.1
    duration: float = 21.0
    pregrow: float = 0.0

    def __post_init__(self):
        _positive("dt", self.dt)
        _positive("duration", self.duration)
        _nonnegative("pregrow", self.pregrow)


@dataclass(frozen=True)
class ObjectiveSection:
    """Named objective variant with one shared tracking weight."""

    variant: str = "J1"
    weight: float = 2.0
    k6: float = 1.0
    k7: float = 1.0
    measure: str = "average"

    def __post_init__(self):
        if self.variant not in ("J", "J1", "J2", "J3"):
            raise ValueError(f"unknown objective variant {self.variant!r}")
        _positive("weight", self.weight)
        _positive("k6", self.k6)
        _positive("k7", self.k7)
        if self.measure not in ("average", "raw"):
            raise ValueError(f"unknown objective measure {self.measure!r}")


@dataclass(frozen=True)
class ControlsSection:
    """Admissible dose boxes for both therapies."""

    u_max: float = 0.12
    s_max: float = 0.8

    def __post_init__(self):
        _positive("u_max", self.u_max)
        _positive("s_max", self.s_max)


@dataclass(frozen=True)
class SeedSection:
    """Initial state: a diffuse elliptical tumor or healthy tissue."""

    mode: str = "tumor"
    center_x: float = 1500.0
    center_y: float = 1500.0
    semi_axis_x: float = 150.0
    semi_axis_y: float = 200.0
    interface_sharpness: float = 10.0
    nutrient_offset: float = 1.0
    nutrient_slope: float = -0.8
    marker_offset: float = 0.0625
    marker_slope: float = 0.7975

    def __post_init__(self):
        if self.mode not in ("tumor", "healthy"):
            raise ValueError(f"seed mode must be tumor or healthy, got {self.mode!r}")
        for name in ("semi_axis_x", "semi_axis_y", "interface_sharpness"):
            _positive(name, getattr(self, name))

    def to_spec(self) -> InitialConditionSpec:
        return InitialConditionSpec(
            center=(self.center_x, self.center_y),
            semi_axis_x=self.semi_axis_x,
            semi_axis_y=self.semi_axis_y,
            interface_sharpness=self.interface_sharpness,
            nutrient_offset=self.nutrient_offset,
            nutrient_slope=self.nutrient_slope,
            marker_offset=self.marker_offset,
            marker_slope=self.marker_slope,
        )


@dataclass(frozen=True)
class GuessSection:
    """Reference single-dose protocols used as the descent start.

    The cytotoxic guess acts through the growth-rate scale; the
    antiangiogenic one reduces the nutrient supply directly. Mode
    ``zero`` starts from no treatment instead.
    """

    mode: str = "reference"
    cyto_dose: float = 75.0
    cyto_tau: float = 5.0
    cyto_beta: float = 1.59e-2
    anti_dose: float = 15.0
    anti_tau: float = 30.0
    anti_beta: float = 0.04

    def __post_init__(self):
        if self.mode not in ("reference", "zero"):
            raise ValueError(f"guess mode must be reference or zero, got {self.mode!r}")
        _nonnegative("cyto_dose", self.cyto_dose)
        _nonnegative("anti_dose", self.anti_dose)
        for name in ("cyto_tau", "cyto_beta", "anti_tau", "anti_beta"):
            _positive(name, getattr(self, name))


@dataclass(frozen=True)
class SolverSection:
    """Newton-Krylov tolerances and the time integrator's damping."""

    newton_tol: float = 1e-3
    newton_abs: float = 1e-14
    max_newton: int = 20
    linear_tol: float = 1e-3
    max_linear: int = 500
    rho_inf: float = 0.5

    def __post_init__(self):
        _positive("newton_tol", self.newton_tol)
        _positive("newton_abs", self.newton_abs)
        _positive("linear_tol", self.linear_tol)
        if self.max_newton < 1 or self.max_linear < 1:
            raise ValueError("iteration budgets must be >= 1")
        if not 0.0 <= self.rho_inf <= 1.0:
            raise ValueError(f"rho_inf must lie in [0, 1], got {self.rho_inf}")

    def to_settings(self) -> SolverSettings:
        return SolverSettings(
            newton_tol=self.newton_tol, newton_abs=self.newton_abs,
            max_newton=self.max_newton, linear_tol=self.linear_tol,
            max_linear=self.max_linear)


@dataclass(frozen=True)
class FitSection:
    """Protocol-fit drug constants, parameter boxes, and budgets."""

    beta: float = 1.59e-2
    tau: float = 5.0
    dose_max: float = 100.0
    time_max: float = 21.0
    tau_min: float = 1.0
    tau_max: float = 20.0
    tol: float = 1e-8
    max_iters: int = 200

    def __post_init__(self):
        for name in ("beta", "tau", "dose_max", "time_max", "tau_min", "tol"):
            _positive(name, getattr(self, name))
        if self.tau_max <= self.tau_min:
            raise ValueError("tau_max must exceed tau_min")
        if not self.tau_min <= self.tau <= self.tau_max:
            raise ValueError("tau must lie inside [tau_min, tau_max]")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")


@dataclass(frozen=True)
class ForwardSection:
    """Schedule applied by plain simulation runs."""

    control: str = "untreated"

    def __post_init__(self):
        if self.control not in ("untreated", "reference", "max"):
            raise ValueError(
                f"forward control must be untreated, reference, or max, got {self.control!r}")


@dataclass(frozen=True)
class OutputSection:
    """Destination directory, snapshot cadence, and reporting scale.

    ``snapshot_every`` is a stride in time nodes (0 = final state
    only); ``v_phi_scale`` multiplies the reported tumor-volume column,
    leaving the raw integral as the default.
    """

    directory: str = "out"
    snapshot_every: int = 0
    v_phi_scale: float = 1.0

    def __post_init__(self):
        if not self.directory:
            raise ValueError("output directory must be nonempty")
        if self.snapshot_every < 0:
            raise ValueError("snapshot_every must be >= 0")
        _positive("v_phi_scale", self.v_phi_scale)


@dataclass(frozen=True)
class RunConfig:
    """Complete, resolved description of one toolkit run."""

    grid: GridSection = GridSection()
    time: TimeSection = TimeSection()
    model: ModelParams = ModelParams()
    objective: ObjectiveSection = ObjectiveSection()
    controls: ControlsSection = ControlsSection()
    seed: SeedSection = SeedSection()
    guess: GuessSection = GuessSection()
    solver: SolverSection = SolverSection()
    descent: DescentSettings = DescentSettings()
    fit: FitSection = FitSection()
    forward: ForwardSection = ForwardSection()
    output: OutputSection = OutputSection()

    def __post_init__(self):
        # cross-section invariants; the march grid must hit T exactly
        steps_for(self.time.duration, self.time.dt)
        if self.time.pregrow > 0:
            steps_for(self.time.pregrow, self.time.dt)


SECTIONS = {
    "grid": GridSection,
    "time": TimeSection,
    "model": ModelParams,
    "objective": ObjectiveSection,
    "controls": ControlsSection,
    "seed": SeedSection,
    "guess": GuessSection,
    "solver": SolverSection,
    "descent": DescentSettings,
    "fit": FitSection,
    "forward": ForwardSection,
    "output": OutputSection,
}

_CONVERTERS = {"int": int, "float": float, "str": str, int: int,
               float: float, str: str}


def _fields(cls):
    return dataclasses.fields(cls)


def _convert(section: str, key: str, kind, raw: str):
    conv = _CONVERTERS[kind]
    try:
        if conv is float:
            value = float(raw)
            if not math.isfinite(value):
                raise ValueError
            return value
        if conv is int:
            return int(raw)
        return raw
    except ValueError:
        raise ConfigError(
            f"{section}.{key}: expected {conv.__name__}, got {raw!r}") from None


def _format(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def parse_config_text(text: str, origin: str = "<string>") -> RunConfig:
    """Resolve an INI document into a validated RunConfig.

    Unknown sections or keys are rejected by name; syntax errors keep
    configparser's line information.
    """
    parser = configparser.RawConfigParser()
    parser.optionxform = str  # model parameter names are case sensitive
    try:
        parser.read_string(text, source=origin)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None

    kwargs = {}
    for section in parser.sections():
        cls = SECTIONS.get(section)
        if cls is None:
            raise ConfigError(f"unknown section [{section}]")
        known = {f.name: f.type for f in _fields(cls)}
        sec_kwargs = {}
        for key, raw in parser.items(section):
            if key not in known:
                raise ConfigError(f"unknown key {section}.{key}")
            sec_kwargs[key] = _convert(section, key, known[key], raw)
        try:
            kwargs[section] = cls(**sec_kwargs)
        except ValueError as exc:
            raise ConfigError(f"[{section}] {exc}") from None
    try:
        return RunConfig(**kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def parse_config(path: Union[str, Path]) -> RunConfig:
    """Load and resolve a config file; unreadable files are config errors."""
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc}") from None
    return parse_config_text(text, origin=str(p))


def config_lines(config: RunConfig) -> list:
    """Fully resolved ``section.key = value`` listing, schema order."""
    lines = []
    for section, cls in SECTIONS.items():
        value = getattr(config, section)
        for f in _fields(cls):
            lines.append(f"{section}.{f.name} = {_format(getattr(value, f.name))}")
    return lines


def config_text(config: RunConfig) -> str:
    """Serialize every resolved value; inverse of ``parse_config_text``."""
    out = []
    for section, cls in SECTIONS.items():
        value = getattr(config, section)
        out.append(f"[{section}]")
        for f in _fields(cls):
            out.append(f"{f.name} = {_format(getattr(value, f.name))}")
        out.append("")
    return "\n".join(out)
