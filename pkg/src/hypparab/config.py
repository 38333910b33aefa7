"""
Run configuration files.

Configurations are TOML documents with the sections ``[grid]``, ``[run]``,
``[model]`` (plus ``[model.tables]`` for the custom preset), ``[checks]``,
``[verify]`` and ``[converge]``. Every key is optional except
``model.preset``; unknown keys are rejected. Errors name the offending key
and, when it can be found, its line.
"""

from __future__ import annotations

import os
import sys
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from . import presets
from .convolution import DriftSchedule, normalize_kernel
from .coupling import ModelSpec, PicardConfig
from .errors import ConfigurationError
from .geometry import Field, Grid, build_grid
from .verify import COUPLED_CHECKS

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

OUTPUT_DIR_ENV = "HYPPARAB_OUTPUT_DIR"

GRID_KEYS = {"dimension", "extents", "cells"}
RUN_KEYS = {"T", "dt_parabolic", "cfl_number", "picard_tol", "max_picard_iters", "window",
            "min_window", "lin_tol", "output_dir", "snapshot_stride", "seed",
            "check_fixed_point"}
MODEL_KEYS = {"preset", "mu", "horizon", "drift", "drift_table", "death", "conversion",
              "prey_growth", "predation", "k_beta", "tables"}
TABLE_KEYS = {"u0", "w0", "a", "b", "alpha", "beta"}
CHECK_KEYS = {"enabled"}
VERIFY_KEYS = {"instances", "cells", "T"}
CONVERGE_KEYS = {"levels", "min_factor"}
SECTIONS = {"grid": GRID_KEYS, "run": RUN_KEYS, "model": MODEL_KEYS, "checks": CHECK_KEYS,
            "verify": VERIFY_KEYS, "converge": CONVERGE_KEYS}


@dataclass
class RunConfig:
    """Validated settings of one run; defaults are the documented ones."""

    dimension: int = 2
    extents: tuple[float, ...] = (1.0, 1.0)
    cells: tuple[int, ...] = (64, 64)
    T: float = 1.0
    dt_parabolic: float = 0.01
    cfl_number: float = 0.5
    picard_tol: float = 1e-8
    max_picard_iters: int = 50
    window: float = 0.25
    min_window: float = 1e-3
    lin_tol: float = 1e-10
    output_dir: str = "output"
    snapshot_stride: int = 10
    seed: int = 0
    check_fixed_point: bool = True
    preset: str = "chase"
    model_params: dict = field(default_factory=dict)
    tables: dict = field(default_factory=dict)
    checks: tuple[str, ...] | None = None
    verify_instances: int = 100
    verify_cells: int = 32
    verify_T: float = 0.5
    converge_levels: int = 3
    converge_min_factor: float = 1.5

    def grid(self) -> Grid:
        return build_grid(self.dimension, self.extents, self.cells)

    @property
    def picard(self) -> PicardConfig:
        return PicardConfig(self.dt_parabolic, self.cfl_number, self.picard_tol,
                            self.max_picard_iters, self.window, self.min_window,
                            self.lin_tol, self.check_fixed_point)

    def horizon_too_small(self) -> bool:
        horizon = self.model_params.get("horizon", 0.2)
        return horizon < max(L / n for L, n in zip(self.extents, self.cells))

    def resolved_output_dir(self) -> Path:
        return Path(os.environ.get(OUTPUT_DIR_ENV) or self.output_dir)

    def echo(self) -> dict:
        """Settings as plain data, without the output location."""
        out = asdict(self)
        out.pop("output_dir")
        out["extents"] = list(self.extents)
        out["cells"] = list(self.cells)
        out["checks"] = None if self.checks is None else list(self.checks)
        out["model_params"] = {k: list(map(list, v)) if k == "drift_table" else v
                               for k, v in self.model_params.items()}
        out["tables"] = {k: {"points": [p.tolist() for p in v["points"]],
                             "values": v["values"].tolist(), "timed": v["timed"]}
                         for k, v in self.tables.items()}
        return out


def _line_of(text: str | None, path: list[str]) -> int | None:
    """Best-effort line number of ``path`` (section names then key) in ``text``."""
    if not text or not path:
        return None
    section, key = ".".join(path[:-1]), path[-1]
    current = ""
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line.startswith("["):
            current = line.strip("[] ")
            if current == ".".join(path):
                return number
            continue
        if current == section and line.split("=", 1)[0].strip() == key:
            return number
    return None


class _Reader:
    def __init__(self, text: str | None):
        self.text = text

    def error(self, path: list[str], message: str) -> ConfigurationError:
        return ConfigurationError(message, key=".".join(path), line=_line_of(self.text, path))

    def number(self, section: dict, path: list[str], default, kind=float, positive=True,
               minimum=None):
        key = path[-1]
        if key not in section:
            return default
        value = section[key]
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise self.error(path, f"expected a number, got {value!r}")
        if kind is int and not float(value).is_integer():
            raise self.error(path, f"expected an integer, got {value!r}")
        value = kind(value)
        if not np.isfinite(value):
            raise self.error(path, "must be finite")
        if positive and value <= 0:
            raise self.error(path, f"must be positive, got {value!r}")
        if minimum is not None and value < minimum:
            raise self.error(path, f"must be at least {minimum}, got {value!r}")
        return value

    def unknown(self, section: dict, allowed: set, prefix: list[str]):
        for key in section:
            if key not in allowed:
                raise self.error(prefix + [key], "unknown key")


def _parse_table(reader: _Reader, spec: Any, path: list[str], grid_dim: int,
                 timed: bool) -> dict:
    if not isinstance(spec, dict):
        raise reader.error(path, "a table needs 'axes' and 'values'")
    allowed = {"axes", "values"} | ({"times"} if timed else set())
    reader.unknown(spec, allowed, path)
    if "axes" not in spec or "values" not in spec:
        raise reader.error(path, "a table needs 'axes' and 'values'")
    axes = [np.asarray(a, dtype=float) for a in spec["axes"]]
    points = ([np.asarray(spec["times"], dtype=float)] if timed and "times" in spec else []) + axes
    values = np.asarray(spec["values"], dtype=float)
    if len(axes) != grid_dim:
        raise reader.error(path, f"needs {grid_dim} spatial axes, got {len(axes)}")
    if values.shape != tuple(len(p) for p in points):
        raise reader.error(path, f"values shape {values.shape} does not match the axes "
                                 f"{tuple(len(p) for p in points)}")
    if any(np.any(np.diff(p) <= 0) for p in points):
        raise reader.error(path, "table nodes must be strictly increasing")
    if not np.all(np.isfinite(values)):
        raise reader.error(path, "table values must be finite")
    return {"points": points, "values": values, "timed": timed and "times" in spec}


class TabulatedFunction:
    """Multilinear interpolation of node values in ``(t, x)`` or ``x``.

    Queries outside the node range are clamped to the nearest node.
    """

    def __init__(self, points, values, timed: bool):
        self.points = [np.asarray(p, dtype=float) for p in points]
        self.values = np.asarray(values, dtype=float)
        self.timed = timed
        # single-node axes are constant; RegularGridInterpolator needs two nodes
        pts, vals = [], self.values
        for axis, p in enumerate(self.points):
            if len(p) == 1:
                p = np.array([p[0], p[0] + 1.0])
                vals = np.concatenate([vals, vals], axis=axis)
            pts.append(p)
        self._interp = RegularGridInterpolator(pts, vals, method="linear")
        self._lo = np.array([p[0] for p in pts])
        self._hi = np.array([p[-1] for p in pts])

    def at(self, t: float | None, x: np.ndarray) -> np.ndarray:
        flat = x.reshape(-1, x.shape[-1])
        if self.timed:
            flat = np.column_stack([np.full(len(flat), float(t)), flat])
        flat = np.clip(flat, self._lo, self._hi)
        return self._interp(flat).reshape(x.shape[:-1])

    def max_abs(self) -> float:
        return float(np.abs(self.values).max())


def _custom_scenario(config: RunConfig, grid: Grid) -> presets.ScenarioPreset:
    p = config.model_params
    tables = {k: TabulatedFunction(**v) for k, v in config.tables.items()}
    x = grid.cell_centers()
    kernel = normalize_kernel(p.get("horizon", 0.2), grid.dimension)
    drift = (DriftSchedule.table(*p["drift_table"]) if "drift_table" in p
             else DriftSchedule.constant(p.get("drift", 0.0)))

    def source(name):
        if name not in tables:
            return None
        return lambda t, xx, _f=tables[name]: _f.at(t, xx)

    alpha = None
    if "alpha" in tables:
        alpha = lambda t, xx, w, _f=tables["alpha"]: _f.at(t, xx)
    beta = None
    if "beta" in tables:
        beta = lambda t, xx, u, w, _f=tables["beta"]: _f.at(t, xx)
    k_beta = p.get("k_beta", tables["beta"].max_abs() if "beta" in tables else 0.0)
    model = ModelSpec(mu=p.get("mu", 0.02), kernel=kernel, drift=drift, alpha=alpha,
                      beta=beta, a=source("a"), b=source("b"), K_alpha=0.0,
                      k_alpha=tables["alpha"].max_abs() if "alpha" in tables else 0.0,
                      K_beta=0.0, k_beta=k_beta, name="custom")
    u0 = Field(grid, tables["u0"].at(None, x)) if "u0" in tables else Field.zeros(grid)
    w0 = Field(grid, tables["w0"].at(None, x)) if "w0" in tables else Field.zeros(grid)
    return presets.ScenarioPreset("custom", model, u0, w0, dict(p))


def build_scenario(config: RunConfig, grid: Grid | None = None) -> presets.ScenarioPreset:
    """Model and initial data of the configured preset on ``grid``."""
    grid = config.grid() if grid is None else grid
    if config.preset == "custom":
        return _custom_scenario(config, grid)
    params = dict(config.model_params)
    if "drift_table" in params:
        params["drift_table"] = tuple(params["drift_table"])
    k_beta = params.pop("k_beta", None)
    if config.preset == "decoupled":
        params = {k: v for k, v in params.items() if k in ("horizon", "mu")}
    scenario = presets.BUILDERS[config.preset](grid, **params)
    if k_beta is not None:
        scenario.model = replace(scenario.model, k_beta=k_beta)
    return scenario


def config_from_dict(data: dict, text: str | None = None) -> RunConfig:
    """Validate a parsed document and build a :class:`RunConfig`."""
    r = _Reader(text)
    r.unknown(data, set(SECTIONS), [])
    for name, section in data.items():
        if not isinstance(section, dict):
            raise r.error([name], "expected a section")
        r.unknown(section, SECTIONS[name], [name])
    cfg = RunConfig()
    grid = data.get("grid", {})
    cfg.dimension = r.number(grid, ["grid", "dimension"], 2, int)
    if cfg.dimension not in (1, 2):
        raise r.error(["grid", "dimension"], "must be 1 or 2")
    default_ext = (1.0,) * cfg.dimension
    default_cells = (64,) * cfg.dimension
    for key, default, kind in (("extents", default_ext, float), ("cells", default_cells, int)):
        value = grid.get(key, default)
        if not isinstance(value, (list, tuple)) or len(value) != cfg.dimension:
            raise r.error(["grid", key], f"expected a list of {cfg.dimension} numbers")
        checked = tuple(r.number({key: v}, ["grid", key], None, kind) for v in value)
        if key == "cells" and min(checked) < 2:
            raise r.error(["grid", key], "need at least 2 cells per axis")
        setattr(cfg, key, checked)

    run = data.get("run", {})
    for name, kind in (("T", float), ("dt_parabolic", float), ("cfl_number", float),
                       ("picard_tol", float), ("window", float), ("min_window", float),
                       ("lin_tol", float)):
        setattr(cfg, name, r.number(run, ["run", name], getattr(cfg, name), kind))
    if cfg.cfl_number > 1:
        raise r.error(["run", "cfl_number"], "must not exceed 1")
    cfg.max_picard_iters = r.number(run, ["run", "max_picard_iters"], 50, int, minimum=2)
    cfg.snapshot_stride = r.number(run, ["run", "snapshot_stride"], 10, int, minimum=1)
    cfg.seed = r.number(run, ["run", "seed"], 0, int, positive=False, minimum=0)
    if "output_dir" in run:
        if not isinstance(run["output_dir"], str) or not run["output_dir"]:
            raise r.error(["run", "output_dir"], "expected a non-empty string")
        cfg.output_dir = run["output_dir"]
    if "check_fixed_point" in run:
        if not isinstance(run["check_fixed_point"], bool):
            raise r.error(["run", "check_fixed_point"], "expected true or false")
        cfg.check_fixed_point = run["check_fixed_point"]

    model = data.get("model", {})
    if "preset" not in model:
        raise r.error(["model", "preset"], "missing; one of " + ", ".join(presets.PRESET_NAMES))
    if model["preset"] not in presets.PRESET_NAMES:
        raise r.error(["model", "preset"], f"unknown preset {model['preset']!r}")
    cfg.preset = model["preset"]
    params = {}
    for name in ("mu", "horizon", "death", "conversion", "prey_growth", "predation",
                 "k_beta"):
        if name in model:
            strict = name in ("mu", "horizon")
            params[name] = r.number(model, ["model", name], None, float, positive=strict,
                                    minimum=None if strict else 0.0)
    if "drift" in model:
        params["drift"] = r.number(model, ["model", "drift"], None, float, positive=False)
    if "drift_table" in model:
        tab = model["drift_table"]
        if (not isinstance(tab, dict) or set(tab) != {"times", "values"}
                or len(tab["times"]) != len(tab["values"]) or not tab["times"]):
            raise r.error(["model", "drift_table"],
                          "expected {times = [...], values = [...]} of equal length")
        try:
            DriftSchedule.table(tab["times"], tab["values"])
        except (ValueError, TypeError) as exc:
            raise r.error(["model", "drift_table"], str(exc)) from None
        params["drift_table"] = (tuple(map(float, tab["times"])), tuple(map(float, tab["values"])))
    cfg.model_params = params
    tables = model.get("tables", {})
    if tables and cfg.preset != "custom":
        raise r.error(["model", "tables"], "tables are only read by the custom preset")
    if not isinstance(tables, dict):
        raise r.error(["model", "tables"], "expected a section")
    r.unknown(tables, TABLE_KEYS, ["model", "tables"])
    cfg.tables = {k: _parse_table(r, v, ["model", "tables", k], cfg.dimension,
                                  timed=k not in ("u0", "w0"))
                  for k, v in tables.items()}
    if cfg.horizon_too_small():
        raise r.error(["model", "horizon"], "horizon must be at least one cell spacing")

    checks = data.get("checks", {})
    if "enabled" in checks:
        enabled = checks["enabled"]
        if not isinstance(enabled, list) or any(c not in COUPLED_CHECKS for c in enabled):
            raise r.error(["checks", "enabled"],
                          "expected a list drawn from " + ", ".join(COUPLED_CHECKS))
        cfg.checks = tuple(enabled)

    ver = data.get("verify", {})
    cfg.verify_instances = r.number(ver, ["verify", "instances"], 100, int)
    cfg.verify_cells = r.number(ver, ["verify", "cells"], 32, int, minimum=2)
    cfg.verify_T = r.number(ver, ["verify", "T"], 0.5, float)
    conv = data.get("converge", {})
    cfg.converge_levels = r.number(conv, ["converge", "levels"], 3, int, minimum=2)
    cfg.converge_min_factor = r.number(conv, ["converge", "min_factor"], 1.5, float)
    return cfg



def parse_config(path) -> tuple[RunConfig, ModelSpec]:
    """Read, validate and resolve a configuration file.

    Returns the run settings and the model of the configured scenario on
    the configured grid.

    Raises
    ------
    ConfigurationError
        On syntax errors, unknown keys and invalid values.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read {path}: {exc}") from None
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"{path}: {exc}") from None
    config = config_from_dict(data, text)
    return config, build_scenario(config).model
