#  Copyright 2024 Hkxs
#
#  Permission is hereby granted, free of charge, to any person obtaining a copy
#  of this software and associated documentation files (the “Software”), to deal
#  in the Software without restriction, including without limitation the rights
#  to use, copy, modify, merge, publish, distribute, sublicense, and/or sell
#  copies of the Software, and to permit persons to whom the Software is
#  furnished to do so, subject to the following conditions:
#
#  The above copyright notice and this permission notice shall be included in
#  all copies or substantial portions of the Software.
#
#  THE SOFTWARE IS PROVIDED “AS IS”, WITHOUT WARRANTY OF ANY KIND, EXPRESS OR
#  IMPLIED, INCLUDING BUT NOT LIMITED TO THE WARRANTIES OF MERCHANTABILITY,
#  FITNESS FOR A PARTICULAR PURPOSE AND NONINFRINGEMENT. IN NO EVENT SHALL THE
#  AUTHORS OR COPYRIGHT HOLDERS BE LIABLE FOR ANY CLAIM, DAMAGES OR OTHER
#  LIABILITY, WHETHER IN AN ACTION OF CONTRACT, TORT OR OTHERWISE, ARISING FROM,
#  OUT OF OR IN CONNECTION WITH THE SOFTWARE OR THE USE OR OTHER DEALINGS IN THE
#  SOFTWARE.

import json
import logging
import os
import re
from dataclasses import dataclass
from dataclasses import replace
from pathlib import Path
from typing import Any

import numpy as np
import numpy.typing as npt
from oct_levelset.control.control_field import ControlParams
from oct_levelset.control.control_field import parameter_names
from oct_levelset.core.quantum_core import build_model
from oct_levelset.core.quantum_core import map_scale
from oct_levelset.core.quantum_core import MODEL_LIBRARY
from oct_levelset.core.quantum_core import observable_library
from oct_levelset.core.quantum_core import QuantumModel
from oct_levelset.core.quantum_core import QuantumState
from oct_levelset.core.quantum_core import ScaleVector
from oct_levelset.core.quantum_core import SystemParams
from oct_levelset.dynamics.cost_adjoint import CostWeights
from oct_levelset.dynamics.cost_adjoint import QUADRATURES
from oct_levelset.dynamics.propagator import TimeGrid
from oct_levelset.levelset.levelset import SweepGrid
from oct_levelset.optimize.optimizer import OptSettings
from oct_levelset.utils.errors import ConfigError
from oct_levelset.utils.errors import OctLevelsetError

logger = logging.getLogger(__name__)

CONFIG_FORMAT_VERSION = 1
THREADS_ENV = "OCT_LEVELSET_THREADS"

# keys accepted from the optimizer section, forwarded to OptSettings
OPTIMIZER_KEYS = {"max_iters": int, "grad_tol": float, "cost_rel_tol": float, "backtrack": float, "armijo": float,
                  "restarts": int, "initial_step": float, "max_step": float, "max_halvings": int,
                  "stagnation_window": int, "quadrature": str, "scaled": bool, "max_move": float}


class _Locator:
    """
    Finds the source line of a dotted key path in the raw config text.
    """

    def __init__(self, text: str):
        self.text = text

    def line(self, key: str, occurrence: int = 1) -> int | None:
        position = 0
        parts = [part for part in re.split(r"[.\[\]]", key) if part and not part.isdigit()]
        if not parts:
            return None
        for i, part in enumerate(parts):
            matches = list(re.finditer(rf'"{re.escape(part)}"\s*:', self.text[position:]))
            wanted = occurrence if i == len(parts) - 1 else 1
            if len(matches) < wanted:
                return None
            position += matches[wanted - 1].start()
        return self.text.count("\n", 0, position) + 1

    def error(self, message: str, key: str, occurrence: int = 1) -> ConfigError:
        return ConfigError(message, key=key, line=self.line(key, occurrence))


class _DuplicateKey(Exception):
    def __init__(self, key: str):
        self.key = key


def _reject_duplicates(pairs: list[tuple[str, Any]]) -> dict:
    result = {}
    for key, value in pairs:
        if key in result:
            raise _DuplicateKey(key)
        result[key] = value
    return result


@dataclass(frozen=True, eq=False)
class ModelConfig:
    name: str
    a_names: tuple[str, ...]
    c_names: tuple[str, ...]
    a_bounds: npt.NDArray | None
    c_bounds: npt.NDArray | None
    s_bounds: npt.NDArray | None
    c_values: npt.NDArray | None
    s: npt.NDArray
    dipole_sign: int
    psi0: QuantumState | None


@dataclass(frozen=True, eq=False)
class FieldConfig:
    pulse_count: int
    b_init: npt.NDArray
    b_bounds: npt.NDArray | None
    frozen: tuple[int, ...]


@dataclass(frozen=True)
class GridConfig:
    T: float
    steps: int


@dataclass(frozen=True)
class CostConfig:
    K: float
    L: float
    theta0: float
    observable: str


@dataclass(frozen=True, eq=False)
class SweepConfig:
    s_axes: tuple[npt.NDArray, ...]
    c_axes: tuple[npt.NDArray, ...]
    c_components: tuple[int, ...]
    warm_start: bool
    continuity_threshold: float | None
    metric_scale: npt.NDArray | None


@dataclass(frozen=True, eq=False)
class RunConfig:
    """
    A validated run configuration.

    Attributes
    ----------
    text : str
        The document as read, echoed verbatim in result documents.
    seed : int
        Seed of every random draw of the run.
    model, field, grid, cost : section dataclasses
        Physics and control setup.
    optimizer : dict
        OptSettings keyword arguments.
    sweep : SweepConfig or None
        Sweep grid, when the document declares one.
    """
    text: str
    seed: int
    model: ModelConfig
    field: FieldConfig
    grid: GridConfig
    cost: CostConfig
    optimizer: dict
    sweep: SweepConfig | None = None

    def build_model(self) -> QuantumModel:
        model = build_model(self.model.name,
                            observable=self.cost.observable,
                            a_bounds=self.model.a_bounds,
                            c_bounds=self.model.c_bounds,
                            c_values=self.model.c_values,
                            s_bounds=self.model.s_bounds,
                            dipole_sign=self.model.dipole_sign,
                            psi0=self.model.psi0)
        return replace(model, a_names=self.model.a_names, c_names=self.model.c_names)

    def system_params(self, model: QuantumModel) -> SystemParams:
        return map_scale(model, ScaleVector(self.model.s), model.c_values)

    def time_grid(self) -> TimeGrid:
        return TimeGrid(self.grid.T, self.grid.steps)

    def weights(self) -> CostWeights:
        return CostWeights(self.cost.K, self.cost.L, self.cost.theta0)

    def b_init(self) -> ControlParams:
        return ControlParams.from_array(self.field.b_init)

    def settings(self, threads: int = 1, seed: int | None = None) -> OptSettings:
        return OptSettings(**self.optimizer,
                           rng_seed=self.seed if seed is None else seed,
                           b_bounds=self.field.b_bounds,
                           frozen=self.field.frozen,
                           threads=threads)

    def sweep_grid(self) -> SweepGrid:
        if self.sweep is None:
            raise ConfigError("The configuration has no sweep section", key="sweep")
        return SweepGrid(self.sweep.s_axes, self.sweep.c_axes, c_components=self.sweep.c_components)


class _Validator:
    """
    Walks the decoded document, raising ConfigError with the key path and
    line of the first problem.
    """

    def __init__(self, locator: _Locator):
        self.locator = locator

    def fail(self, message: str, key: str) -> ConfigError:
        return self.locator.error(message, key)

    def section(self, data: Any, key: str, required: set[str], optional: set[str]) -> dict:
        if not isinstance(data, dict):
            raise self.fail("expected an object", key)
        for name in data:
            if name not in required | optional:
                raise self.fail(f"unknown key, allowed keys are {sorted(required | optional)}",
                                f"{key}.{name}" if key else name)
        for name in sorted(required):
            if name not in data:
                raise self.fail(f"missing required key '{name}'", key or name)
        return data

    def number(self, value: Any, key: str, positive: bool = False, non_negative: bool = False) -> float:
        if isinstance(value, bool) or not isinstance(value, (int, float)) or not np.isfinite(value):
            raise self.fail(f"expected a finite number, got {value!r}", key)
        if positive and value <= 0:
            raise self.fail(f"must be positive, got {value}", key)
        if non_negative and value < 0:
            raise self.fail(f"must be non-negative, got {value}", key)
        return float(value)

    def integer(self, value: Any, key: str, minimum: int | None = None) -> int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise self.fail(f"expected an integer, got {value!r}", key)
        if minimum is not None and value < minimum:
            raise self.fail(f"must be at least {minimum}, got {value}", key)
        return value

    def vector(self, value: Any, key: str, size: int | None = None) -> npt.NDArray:
        if not isinstance(value, list):
            raise self.fail("expected a list of numbers", key)
        values = np.array([self.number(v, f"{key}[{i}]") for i, v in enumerate(value)], dtype=np.float64)
        if size is not None and values.size != size:
            raise self.fail(f"expected {size} values, got {values.size}", key)
        return values

    def bounds(self, value: Any, key: str, names: list[str]) -> npt.NDArray:
        if not isinstance(value, list) or len(value) != len(names):
            raise self.fail(f"expected {len(names)} [lo, hi] pairs ({', '.join(names)})", key)
        rows = []
        for name, row in zip(names, value):
            if not isinstance(row, list) or len(row) != 2:
                raise self.fail("expected a [lo, hi] pair", f"{key}.{name}")
            lo, hi = (self.number(v, f"{key}.{name}") for v in row)
            if lo > hi:
                raise self.fail(f"lower bound {lo} above upper bound {hi}", f"{key}.{name}")
            rows.append((lo, hi))
        return np.array(rows, dtype=np.float64)

    def names(self, value: Any, key: str, size: int) -> tuple[str, ...]:
        if not isinstance(value, list) or not all(isinstance(v, str) and v for v in value):
            raise self.fail("expected a list of non-empty names", key)
        if len(value) != size:
            raise self.fail(f"expected {size} names, got {len(value)}", key)
        return tuple(value)


def _model_section(v: _Validator, data: Any) -> ModelConfig:
    data = v.section(data, "model", {"name"},
                     {"a_names", "c_names", "a_bounds", "c_bounds", "c_values", "s_bounds", "s", "dipole_sign",
                      "psi0"})
    name = data["name"]
    if name not in MODEL_LIBRARY:
        raise v.fail(f"unknown model '{name}', available: {sorted(MODEL_LIBRARY)}", "model.name")
    template = MODEL_LIBRARY[name]
    a_names = v.names(data["a_names"], "model.a_names", len(template.a_names)) if "a_names" in data \
        else template.a_names
    c_names = v.names(data["c_names"], "model.c_names", len(template.c_names)) if "c_names" in data \
        else template.c_names
    dipole_sign = v.integer(data.get("dipole_sign", 1), "model.dipole_sign")
    if dipole_sign not in (1, -1):
        raise v.fail(f"must be +1 or -1, got {dipole_sign}", "model.dipole_sign")
    psi0 = None
    if "psi0" in data:
        pairs = data["psi0"]
        if not isinstance(pairs, list) or not all(isinstance(p, list) and len(p) == 2 for p in pairs):
            raise v.fail("expected a list of [re, im] pairs", "model.psi0")
        if len(pairs) != template.dim:
            raise v.fail(f"model '{name}' has dimension {template.dim}, got {len(pairs)} amplitudes", "model.psi0")
        for i, pair in enumerate(pairs):
            for part in pair:
                v.number(part, f"model.psi0[{i}]")
        try:
            psi0 = QuantumState.from_pairs(pairs)
        except OctLevelsetError as error:
            raise v.fail(error.message, "model.psi0")
    s_bounds = v.bounds(data["s_bounds"], "model.s_bounds", [f"s_{i}" for i in range(template.p)]) \
        if "s_bounds" in data else None
    s = v.vector(data["s"], "model.s", template.p) if "s" in data else np.ones(template.p)
    return ModelConfig(
        name=name,
        a_names=a_names,
        c_names=c_names,
        a_bounds=v.bounds(data["a_bounds"], "model.a_bounds", list(a_names)) if "a_bounds" in data else None,
        c_bounds=v.bounds(data["c_bounds"], "model.c_bounds", list(c_names)) if "c_bounds" in data else None,
        s_bounds=s_bounds,
        c_values=v.vector(data["c_values"], "model.c_values", len(c_names)) if "c_values" in data else None,
        s=s,
        dipole_sign=dipole_sign,
        psi0=psi0,
    )


def _field_section(v: _Validator, data: Any) -> FieldConfig:
    data = v.section(data, "field", {"pulse_count", "b_init"}, {"b_bounds", "frozen"})
    pulse_count = v.integer(data["pulse_count"], "field.pulse_count", minimum=1)
    names = parameter_names(pulse_count)
    b_init = v.vector(data["b_init"], "field.b_init", len(names))
    b_bounds = None
    if "b_bounds" in data:
        b_bounds = v.bounds(data["b_bounds"], "field.b_bounds", names)
        for i, name in enumerate(names):
            if name.startswith("width") and b_bounds[i, 0] <= 0:
                raise v.fail(f"pulse widths must stay positive, lower bound is {b_bounds[i, 0]}",
                             f"field.b_bounds.{name}")
        outside = [name for i, name in enumerate(names) if not b_bounds[i, 0] <= b_init[i] <= b_bounds[i, 1]]
        if outside:
            raise v.fail(f"initial values outside b_bounds for {outside}", "field.b_init")
    frozen_names = data.get("frozen", [])
    if not isinstance(frozen_names, list) or not all(isinstance(n, str) for n in frozen_names):
        raise v.fail("expected a list of parameter names", "field.frozen")
    if len(set(frozen_names)) != len(frozen_names):
        raise v.fail("duplicate parameter name", "field.frozen")
    unknown = [n for n in frozen_names if n not in names]
    if unknown:
        raise v.fail(f"unknown control parameters {unknown}, available: {names}", "field.frozen")
    try:
        ControlParams.from_array(b_init)
    except OctLevelsetError as error:
        raise v.fail(error.message, "field.b_init")
    return FieldConfig(pulse_count, b_init, b_bounds, tuple(names.index(n) for n in frozen_names))


def _grid_section(v: _Validator, data: Any) -> GridConfig:
    data = v.section(data, "grid", {"T", "steps"}, set())
    return GridConfig(v.number(data["T"], "grid.T", positive=True), v.integer(data["steps"], "grid.steps", 2))


def _cost_section(v: _Validator, data: Any, model_name: str) -> CostConfig:
    data = v.section(data, "cost", {"K", "L", "theta0", "observable"}, set())
    K = v.number(data["K"], "cost.K", non_negative=True)
    L = v.number(data["L"], "cost.L", non_negative=True)
    if K == 0 and L == 0:
        raise v.fail("K and L cannot both be zero", "cost.K")
    observable = data["observable"]
    available = sorted(observable_library(model_name))
    if observable not in available:
        raise v.fail(f"unknown observable '{observable}' for model '{model_name}', available: {available}",
                     "cost.observable")
    return CostConfig(K, L, v.number(data["theta0"], "cost.theta0"), observable)


def _optimizer_section(v: _Validator, data: Any) -> dict:
    data = v.section(data, "optimizer", set(), set(OPTIMIZER_KEYS))
    settings: dict[str, Any] = {}
    for key, kind in OPTIMIZER_KEYS.items():
        if key not in data:
            continue
        if kind is int:
            settings[key] = v.integer(data[key], f"optimizer.{key}", minimum=0)
        elif kind is float:
            settings[key] = v.number(data[key], f"optimizer.{key}", non_negative=True)
        elif kind is bool:
            if not isinstance(data[key], bool):
                raise v.fail("expected true or false", f"optimizer.{key}")
            settings[key] = data[key]
        else:
            settings[key] = data[key]
    if settings.get("quadrature", QUADRATURES[0]) not in QUADRATURES:
        raise v.fail(f"unknown quadrature '{settings['quadrature']}', available: {list(QUADRATURES)}",
                     "optimizer.quadrature")
    try:
        OptSettings(**settings)
    except OctLevelsetError as error:
        raise v.fail(error.message, "optimizer")
    return settings


def _sweep_section(v: _Validator, data: Any, model: ModelConfig, m: int) -> SweepConfig:
    data = v.section(data, "sweep", {"s_axes"}, {"c_axes", "warm_start", "continuity_threshold", "metric_scale"})
    template = MODEL_LIBRARY[model.name]

    def axis(values: Any, key: str) -> npt.NDArray:
        nodes = v.vector(values, key)
        if nodes.size < 1 or np.any(np.diff(nodes) <= 0):
            raise v.fail("axis nodes must be a non-empty strictly increasing list", key)
        return nodes

    if not isinstance(data["s_axes"], list) or len(data["s_axes"]) != template.p:
        raise v.fail(f"expected {template.p} s axis list(s)", "sweep.s_axes")
    s_axes = tuple(axis(values, f"sweep.s_axes[{i}]") for i, values in enumerate(data["s_axes"]))
    c_data = data.get("c_axes", {})
    if not isinstance(c_data, dict):
        raise v.fail("expected an object mapping c parameter names to node lists", "sweep.c_axes")
    unknown = [name for name in c_data if name not in model.c_names]
    if unknown:
        raise v.fail(f"unknown c parameters {unknown}, available: {list(model.c_names)}", "sweep.c_axes")
    c_axes = tuple(axis(values, f"sweep.c_axes.{name}") for name, values in c_data.items())
    warm_start = data.get("warm_start", True)
    if not isinstance(warm_start, bool):
        raise v.fail("expected true or false", "sweep.warm_start")
    threshold = data.get("continuity_threshold")
    if threshold is not None:
        threshold = v.number(threshold, "sweep.continuity_threshold", positive=True)
    metric_scale = data.get("metric_scale")
    if metric_scale is not None:
        metric_scale = v.vector(metric_scale, "sweep.metric_scale", m)
        if np.any(metric_scale <= 0):
            raise v.fail("scale factors must be positive", "sweep.metric_scale")
    return SweepConfig(s_axes=s_axes,
                       c_axes=c_axes,
                       c_components=tuple(model.c_names.index(name) for name in c_data),
                       warm_start=warm_start,
                       continuity_threshold=threshold,
                       metric_scale=metric_scale)


def parse_config(text: str) -> RunConfig:
    """
    Parse and validate a JSON run configuration.

    Parameters
    ----------
    text : str
        The document.

    Returns
    -------
    RunConfig

    Raises
    ------
    ConfigError
        Syntax errors, duplicate or unknown keys, bad values and unresolved
        names, located by key path and source line.
    """
    locator = _Locator(text)
    try:
        data = json.loads(text, object_pairs_hook=_reject_duplicates)
    except json.JSONDecodeError as error:
        raise ConfigError(f"invalid JSON: {error.msg}", line=error.lineno)
    except _DuplicateKey as error:
        raise ConfigError("duplicate key", key=error.key, line=locator.line(error.key, occurrence=2))
    v = _Validator(locator)
    data = v.section(data, "", {"format_version", "seed", "model", "field", "grid", "cost"},
                     {"optimizer", "sweep"})
    if data["format_version"] != CONFIG_FORMAT_VERSION:
        raise v.fail(f"unsupported version {data['format_version']!r}, expected {CONFIG_FORMAT_VERSION}",
                     "format_version")
    seed = v.integer(data["seed"], "seed", minimum=0)
    model = _model_section(v, data["model"])
    field_config = _field_section(v, data["field"])
    b_names = parameter_names(field_config.pulse_count)
    seen: set[str] = set()
    for name in model.a_names + model.c_names + tuple(b_names):
        if name in seen:
            raise v.fail(f"duplicate parameter name '{name}', system and control parameters must be distinct",
                         "model")
        seen.add(name)
    config = RunConfig(
        text=text,
        seed=seed,
        model=model,
        field=field_config,
        grid=_grid_section(v, data["grid"]),
        cost=_cost_section(v, data["cost"], model.name),
        optimizer=_optimizer_section(v, data.get("optimizer", {})),
        sweep=_sweep_section(v, data["sweep"], model, len(b_names)) if "sweep" in data else None,
    )
    _check_consistency(config, locator)
    return config


def _check_consistency(config: RunConfig, locator: _Locator) -> None:
    """
    Build every runtime object once, so failures surface at load time.
    """
    stage = "model"
    try:
        model = config.build_model()
        stage = "model.s"
        config.system_params(model)
        stage = "optimizer"
        config.settings()
        if config.sweep is not None:
            stage = "sweep"
            grid = config.sweep_grid()
            for index in (grid.nodes()[0], grid.nodes()[-1]):
                s, c = grid.coordinates(index, model.c_values)
                map_scale(model, ScaleVector(s), c)
    except ConfigError:
        raise
    except OctLevelsetError as error:
        raise locator.error(error.message, stage)


def load_config(filename: Path) -> RunConfig:
    """
    Read and validate a configuration file, keeping its text byte for byte.
    """
    filename = Path(filename)
    logger.debug(f"Loading configuration '{filename}'")
    return parse_config(filename.read_bytes().decode("utf-8"))


def thread_count(flag: int | None) -> int:
    """
    Worker threads: the command line flag, else the environment, else 1.
    """
    if flag is not None:
        value, source = flag, "--threads"
    elif os.environ.get(THREADS_ENV):
        source = THREADS_ENV
        try:
            value = int(os.environ[THREADS_ENV])
        except ValueError:
            raise ConfigError(f"expected an integer, got {os.environ[THREADS_ENV]!r}", key=source)
    else:
        return 1
    if value < 1:
        raise ConfigError(f"must be at least 1, got {value}", key=source)
    return value
