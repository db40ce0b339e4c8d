"""Run configuration: YAML schema, loading, and validation diagnostics.

A config file is YAML with the following shape (energies in units of the
tunneling delta, time in 1/delta):

    experiment: qfi-dynamics        # one of EXPERIMENTS
    sensor:
      epsilon: 0.5
      delta: 1.0                    # optional, default 1
      theta: 0.0
      alpha: 0.7853981633974483     # optional, defaults pi/4
      varphi: 1.5707963267948966    # optional, defaults pi/2
    bath:
      chi: 0.06
      omega_c: 10.0
      beta: 0.06
    solver: heom                    # heom | bornmarkov | gibbs;
                                    # steady-vs-chi accepts a list
    truncation:
      k_max: 2                      # or "auto"
      depth: 6                      # or "auto"
    grid:
      t_end: 100.0
      dt: auto                      # or a number
      stride: 4                     # optional, default 1
    sweep:                          # sweep axes (lists, non-empty)
      omega_c: [0.5, 0.8, 4.0, 10.0]
    output:
      path: fig2_qfi                # basename for .csv/.manifest.json/.png
    options: {}                     # experiment-specific knobs, see runners

`validate_config` never raises: it returns every problem it can find as a
Diagnostic so the CLI can print a machine-readable list (exit 2).
`load_config` raises ConfigError when any error-severity diagnostic exists.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import yaml

from .bath import BathSpec
from .errors import ConfigError
from .hierarchy import hierarchy_size
from .model import SensorParams

EXPERIMENTS = (
    "dynamics",
    "qfi-dynamics",
    "max-qfi-vs-theta",
    "steady-vs-chi",
    "table1",
    "compare-bm",
    "converge",
)
SOLVERS = ("heom", "bornmarkov", "gibbs")

#: experiments that consume a sweep axis themselves when invoked via `run`
INTRINSIC_AXES = {
    "max-qfi-vs-theta": "theta",
    "steady-vs-chi": "chi",
    "table1": "chi",
}

#: axes the sweep machinery knows how to apply to a base config
SWEEPABLE_AXES = ("chi", "omega_c", "beta", "theta", "epsilon")

#: experiments that need a time grid
TIMED_EXPERIMENTS = ("dynamics", "qfi-dynamics", "max-qfi-vs-theta",
                     "compare-bm", "converge")

DEFAULT_MAX_MEMORY = 3 * 1024**3  # bytes; the box has 5 GB

_SENSOR_KEYS = {"epsilon", "delta", "theta", "alpha", "varphi"}
_BATH_KEYS = {"chi", "omega_c", "beta"}
_TRUNCATION_KEYS = {"k_max", "depth"}
_GRID_KEYS = {"t_end", "dt", "stride"}
_OUTPUT_KEYS = {"path", "format"}
_TOP_KEYS = {"experiment", "sensor", "bath", "solver", "truncation", "grid",
             "sweep", "output", "options"}


@dataclass(frozen=True)
class Diagnostic:
    """One validation finding; severity is 'error' or 'warning'."""

    severity: str
    field: str
    message: str

    def to_dict(self) -> dict:
        return {"severity": self.severity, "field": self.field,
                "message": self.message}

    def __str__(self) -> str:
        return f"{self.severity}: {self.field}: {self.message}"


@dataclass(frozen=True)
class Truncation:
    """Hierarchy truncation; None means resolve automatically at run time."""

    k_max: Optional[int] = None
    depth: Optional[int] = None


@dataclass(frozen=True)
class GridSpec:
    t_end: float
    dt: Optional[float] = None
    stride: int = 1


@dataclass(frozen=True)
class OutputSpec:
    path: str
    format: str = "csv"


@dataclass(frozen=True)
class RunConfig:
    experiment: str
    sensor: SensorParams
    bath: BathSpec
    solver: tuple[str, ...]
    truncation: Truncation = Truncation()
    grid: Optional[GridSpec] = None
    sweep: dict[str, tuple[float, ...]] = field(default_factory=dict)
    output: OutputSpec = OutputSpec(path="run")
    options: dict[str, Any] = field(default_factory=dict)


def estimate_memory_bytes(k_max: int, depth: int) -> int:
    """Rough peak memory of one hierarchy propagation.

    State vector of hierarchy_size 2x2 blocks plus six RK4 work copies, and
    the CSR generator: about (2 + 2*(k_max+1)) 4x4 blocks per auxiliary row
    at <= 16 nonzeros each (complex128 value + int32 index per entry).
    """
    n = hierarchy_size(k_max, depth)
    state = n * 4 * 16 * 7
    nnz = n * 16 * (2 + 2 * (k_max + 1))
    matrix = nnz * 20 + n * 4 * 4
    return state + matrix


def _as_float(value, field_name, errors) -> Optional[float]:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        errors.append(Diagnostic("error", field_name,
                                 f"expected a number, got {value!r}"))
        return None
    return float(value)


def _parse_level(value, field_name, errors) -> Optional[int]:
    """k_max/depth entries: a non-negative int or the string 'auto' (None)."""
    if value is None or (isinstance(value, str) and value.lower() == "auto"):
        return None
    if isinstance(value, bool) or not isinstance(value, int):
        errors.append(Diagnostic("error", field_name,
                                 f"expected an integer or 'auto', got {value!r}"))
        return None
    if value < 0:
        errors.append(Diagnostic("error", field_name,
                                 f"must be >= 0, got {value}"))
        return None
    return value


def _check_unknown(mapping, allowed, prefix, errors):
    for key in mapping:
        if key not in allowed:
            errors.append(Diagnostic("error", f"{prefix}{key}",
                                     "unknown key (typo?)"))


def validate_config(data: Any) -> list[Diagnostic]:
    """Collect every validation finding for a parsed YAML mapping.

    Returns diagnostics (possibly empty); never raises for content problems.
    """
    out: list[Diagnostic] = []
    if not isinstance(data, dict):
        return [Diagnostic("error", "<root>",
                           f"config must be a mapping, got {type(data).__name__}")]
    _check_unknown(data, _TOP_KEYS, "", out)

    experiment = data.get("experiment")
    if experiment not in EXPERIMENTS:
        out.append(Diagnostic("error", "experiment",
                              f"must be one of {EXPERIMENTS}, got {experiment!r}"))

    # --- sensor ---------------------------------------------------------
    sensor_map = data.get("sensor")
    sensor = None
    if not isinstance(sensor_map, dict):
        out.append(Diagnostic("error", "sensor", "missing or not a mapping"))
    else:
        _check_unknown(sensor_map, _SENSOR_KEYS, "sensor.", out)
        kwargs = {}
        for key in _SENSOR_KEYS:
            if key in sensor_map:
                v = _as_float(sensor_map[key], f"sensor.{key}", out)
                if v is not None:
                    kwargs[key] = v
        if "epsilon" not in kwargs:
            out.append(Diagnostic("error", "sensor.epsilon", "required"))
        else:
            try:
                sensor = SensorParams(**kwargs)
            except ValueError as exc:
                out.append(Diagnostic("error", "sensor", str(exc)))

    # --- bath -----------------------------------------------------------
    bath_map = data.get("bath")
    bath = None
    if not isinstance(bath_map, dict):
        out.append(Diagnostic("error", "bath", "missing or not a mapping"))
    else:
        _check_unknown(bath_map, _BATH_KEYS, "bath.", out)
        kwargs = {}
        for key in _BATH_KEYS:
            if key not in bath_map:
                out.append(Diagnostic("error", f"bath.{key}", "required"))
            else:
                v = _as_float(bath_map[key], f"bath.{key}", out)
                if v is not None:
                    kwargs[key] = v
        if len(kwargs) == 3:
            try:
                bath = BathSpec(**kwargs)
            except ValueError as exc:
                out.append(Diagnostic("error", "bath", str(exc)))
    if bath is not None:
        out.extend(_matsubara_diagnostics(bath))

    # --- solver ---------------------------------------------------------
    solver = data.get("solver", "heom")
    solvers = tuple(solver) if isinstance(solver, list) else (solver,)
    for s in solvers:
        if s not in SOLVERS:
            out.append(Diagnostic("error", "solver",
                                  f"must be one of {SOLVERS}, got {s!r}"))
    if isinstance(solver, list):
        if experiment != "steady-vs-chi":
            out.append(Diagnostic("error", "solver",
                                  "a solver list is only meaningful for "
                                  "steady-vs-chi"))
        if len(solvers) != len(set(solvers)):
            out.append(Diagnostic("error", "solver", "duplicate solver"))
    if experiment in ("dynamics", "qfi-dynamics", "max-qfi-vs-theta") \
            and solvers and all(s in SOLVERS for s in solvers) \
            and solvers[0] == "gibbs":
        out.append(Diagnostic("error", "solver",
                              f"{experiment} needs a dynamical solver "
                              "(heom or bornmarkov)"))

    # --- truncation ------------------------------------------------------
    trunc_map = data.get("truncation", {})
    k_max = depth = None
    if not isinstance(trunc_map, dict):
        out.append(Diagnostic("error", "truncation", "not a mapping"))
    else:
        _check_unknown(trunc_map, _TRUNCATION_KEYS, "truncation.", out)
        k_max = _parse_level(trunc_map.get("k_max"), "truncation.k_max", out)
        depth = _parse_level(trunc_map.get("depth"), "truncation.depth", out)
        if depth == 0:
            out.append(Diagnostic("error", "truncation.depth",
                                  "must be >= 1 (0 keeps no auxiliaries)"))
    if k_max is not None and depth is not None and depth >= 1:
        max_memory = data.get("options", {}).get("max_memory", DEFAULT_MAX_MEMORY) \
            if isinstance(data.get("options", {}), dict) else DEFAULT_MAX_MEMORY
        estimate = estimate_memory_bytes(k_max, depth)
        if estimate > max_memory:
            out.append(Diagnostic(
                "error", "truncation",
                f"hierarchy of {hierarchy_size(k_max, depth)} auxiliaries "
                f"needs ~{estimate / 1024**3:.2f} GiB "
                f"> budget {max_memory / 1024**3:.2f} GiB"))

    # --- grid -------------------------------------------------------------
    grid_map = data.get("grid")
    if grid_map is not None and not isinstance(grid_map, dict):
        out.append(Diagnostic("error", "grid", "not a mapping"))
        grid_map = None
    if isinstance(grid_map, dict):
        _check_unknown(grid_map, _GRID_KEYS, "grid.", out)
        t_end = _as_float(grid_map.get("t_end", 0.0), "grid.t_end", out)
        if t_end is not None and t_end <= 0:
            out.append(Diagnostic("error", "grid.t_end", "must be > 0"))
        dt = grid_map.get("dt")
        if dt is not None and not (isinstance(dt, str) and dt.lower() == "auto"):
            v = _as_float(dt, "grid.dt", out)
            if v is not None and v <= 0:
                out.append(Diagnostic("error", "grid.dt", "must be > 0"))
        stride = grid_map.get("stride", 1)
        if isinstance(stride, bool) or not isinstance(stride, int) or stride < 1:
            out.append(Diagnostic("error", "grid.stride",
                                  f"must be an integer >= 1, got {stride!r}"))
    elif experiment in TIMED_EXPERIMENTS:
        out.append(Diagnostic("error", "grid",
                              f"experiment {experiment} needs grid.t_end"))

    # --- sweep -------------------------------------------------------------
    sweep_map = data.get("sweep", {})
    if not isinstance(sweep_map, dict):
        out.append(Diagnostic("error", "sweep", "not a mapping"))
        sweep_map = {}
    for axis, values in sweep_map.items():
        if axis not in SWEEPABLE_AXES:
            out.append(Diagnostic("error", f"sweep.{axis}",
                                  f"unknown axis (allowed: {SWEEPABLE_AXES})"))
            continue
        if not isinstance(values, list) or not values:
            out.append(Diagnostic("error", f"sweep.{axis}",
                                  "sweep axes must be non-empty lists"))
            continue
        for i, v in enumerate(values):
            x = _as_float(v, f"sweep.{axis}[{i}]", out)
            if x is None:
                continue
            if axis in ("omega_c", "beta") and x <= 0:
                out.append(Diagnostic("error", f"sweep.{axis}[{i}]",
                                      "must be > 0"))
            if axis == "chi" and x < 0:
                out.append(Diagnostic("error", f"sweep.{axis}[{i}]",
                                      "must be >= 0"))
            if axis == "theta" and not 0 <= x < math.pi:
                out.append(Diagnostic("error", f"sweep.{axis}[{i}]",
                                      "theta must lie in [0, pi)"))
    intrinsic = INTRINSIC_AXES.get(experiment)
    if intrinsic is not None and intrinsic not in sweep_map \
            and experiment != "table1":
        # table1 falls back to the standard 0..0.5 grid; the others must say
        # what they sweep.
        out.append(Diagnostic("error", f"sweep.{intrinsic}",
                              f"experiment {experiment} needs a "
                              f"{intrinsic} axis"))

    # --- output -------------------------------------------------------------
    output_map = data.get("output", {})
    if not isinstance(output_map, dict):
        out.append(Diagnostic("error", "output", "not a mapping"))
    else:
        _check_unknown(output_map, _OUTPUT_KEYS, "output.", out)
        path = output_map.get("path", "run")
        if not isinstance(path, str) or not path:
            out.append(Diagnostic("error", "output.path",
                                  f"expected a non-empty string, got {path!r}"))
        fmt = output_map.get("format", "csv")
        if fmt != "csv":
            out.append(Diagnostic("error", "output.format",
                                  f"only 'csv' is supported, got {fmt!r}"))

    options = data.get("options", {})
    if not isinstance(options, dict):
        out.append(Diagnostic("error", "options", "not a mapping"))

    return out


def _matsubara_diagnostics(bath: BathSpec) -> list[Diagnostic]:
    """Degeneracy guard: beta*omega_c near a Matsubara frequency 2*pi*l."""
    out = []
    x = bath.beta * bath.omega_c / (2 * math.pi)
    nearest = round(x)
    if nearest >= 1:
        gap = abs(x - nearest) / max(x, 1.0)
        if gap < 1e-9:
            out.append(Diagnostic(
                "error", "bath",
                f"beta*omega_c = {bath.beta * bath.omega_c:.6g} collides with "
                f"the Matsubara frequency 2*pi*{nearest} (expansion "
                "coefficients are singular there); perturb beta or omega_c"))
        elif gap < 1e-6:
            out.append(Diagnostic(
                "warning", "bath",
                f"beta*omega_c/(2*pi) is within {gap:.1e} of integer "
                f"{nearest}: the nearby Matsubara coefficient is huge and "
                "will slow convergence"))
    return out


def config_from_mapping(data: Any) -> RunConfig:
    """Build a RunConfig, raising ConfigError with all error diagnostics."""
    diagnostics = validate_config(data)
    errors = [str(d) for d in diagnostics if d.severity == "error"]
    if errors:
        raise ConfigError(errors)

    sensor_map = dict(data["sensor"])
    sensor = SensorParams(**{k: float(v) for k, v in sensor_map.items()})
    bath = BathSpec(**{k: float(v) for k, v in data["bath"].items()})
    solver = data.get("solver", "heom")
    solvers = tuple(solver) if isinstance(solver, list) else (solver,)

    trunc_map = data.get("truncation", {}) or {}
    truncation = Truncation(
        k_max=_parse_level(trunc_map.get("k_max"), "", []),
        depth=_parse_level(trunc_map.get("depth"), "", []),
    )

    grid = None
    grid_map = data.get("grid")
    if isinstance(grid_map, dict):
        dt = grid_map.get("dt")
        if isinstance(dt, str):
            dt = None
        grid = GridSpec(t_end=float(grid_map["t_end"]),
                        dt=None if dt is None else float(dt),
                        stride=int(grid_map.get("stride", 1)))

    sweep = {axis: tuple(float(v) for v in values)
             for axis, values in (data.get("sweep") or {}).items()}

    output_map = data.get("output", {}) or {}
    output = OutputSpec(path=output_map.get("path", "run"),
                        format=output_map.get("format", "csv"))

    return RunConfig(
        experiment=data["experiment"],
        sensor=sensor,
        bath=bath,
        solver=solvers,
        truncation=truncation,
        grid=grid,
        sweep=sweep,
        output=output,
        options=dict(data.get("options") or {}),
    )


def load_config(path: str | Path) -> RunConfig:
    """Parse and validate a YAML config file."""
    text = Path(path).read_text()
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError([f"YAML parse failure: {exc}"]) from exc
    return config_from_mapping(data)


def validate_file(path: str | Path) -> list[Diagnostic]:
    """The `validate` subcommand's engine: report, never run."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        return [Diagnostic("error", "<file>", str(exc))]
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        return [Diagnostic("error", "<yaml>", f"parse failure: {exc}")]
    return validate_config(data)
