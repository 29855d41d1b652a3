"""Experiment configuration: JSON schema, validation, and the built-in presets.

A config names one grid, one pair of piecewise-polynomial initial densities,
a list of runs (each with a model and its parameters, optionally swept), the
observer cadence, run-to-run comparisons, and the output location.
"""
from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import jsonschema
import numpy as np

from .boltzmann import POSITIVITY_POLICIES, ModelParams
from .diagnostics import ESTIMATORS
from .grid import Grid, shift_steps
from .layer import LayerParams
from .limit import LimitParams

MODELS = ("boltzmann", "fbp", "layer", "limit", "consecutive")
QUANTITIES = ("price", "f", "g")

# (required, optional) parameter names per model
MODEL_KEYS: dict[str, tuple[frozenset, frozenset]] = {
    "boltzmann": (frozenset({"k", "a", "dt"}), frozenset({"t_end", "sigma", "positivity"})),
    "fbp": (frozenset({"a", "dt"}), frozenset({"k", "t_end", "sigma"})),
    "layer": (frozenset({"a", "dt"}), frozenset({"k", "t_end", "sigma", "epsilon"})),
    "limit": (frozenset({"c", "dt"}), frozenset({"t_end", "sigma"})),
    "consecutive": (frozenset({"dt"}), frozenset({"c", "t_end", "sigma"})),
}

_number = {"type": "number"}
_piece = {
    "type": "object",
    "required": ["interval"],
    "additionalProperties": False,
    "properties": {
        "interval": {"type": "array", "items": _number, "minItems": 2, "maxItems": 2},
        # c0 + c1 x + c2 x^2
        "coeffs": {"type": "array", "items": _number, "minItems": 1, "maxItems": 3},
        # scale * (x - r1) * (r2 - x)
        "scale": _number,
        "roots": {"type": "array", "items": _number, "minItems": 2, "maxItems": 2},
    },
    "oneOf": [{"required": ["coeffs"]}, {"required": ["scale", "roots"]}],
}

SCHEMA: dict[str, Any] = {
    "type": "object",
    "required": ["grid", "initial_data", "runs"],
    "additionalProperties": False,
    "properties": {
        "name": {"type": "string"},
        "grid": {
            "type": "object",
            "required": ["x_min", "x_max"],
            "additionalProperties": False,
            "properties": {
                "x_min": _number,
                "x_max": _number,
                "h": {"type": "number", "exclusiveMinimum": 0},
                "n_cells": {"type": "integer", "minimum": 4},
            },
            "oneOf": [{"required": ["h"]}, {"required": ["n_cells"]}],
        },
        "initial_data": {
            "type": "object",
            "required": ["f", "g"],
            "additionalProperties": False,
            "properties": {
                "f": {"type": "array", "items": _piece},
                "g": {"type": "array", "items": _piece},
            },
        },
        "runs": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["label", "model", "params"],
                "additionalProperties": False,
                "properties": {
                    "label": {"type": "string", "pattern": r"^[A-Za-z0-9_.-]+$"},
                    "model": {"enum": list(MODELS)},
                    "params": {
                        "type": "object",
                        "additionalProperties": {"anyOf": [_number, {"enum": list(POSITIVITY_POLICIES)}]},
                    },
                    "estimator": {"enum": list(ESTIMATORS)},
                    "sweep": {
                        "type": "object",
                        "minProperties": 1,
                        "additionalProperties": {"type": "array", "items": _number, "minItems": 1},
                    },
                },
            },
        },
        "observers": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "stride": {"type": "integer", "minimum": 1},
                "snapshots": {"type": "array", "items": {"type": "number", "minimum": 0}},
            },
        },
        "comparisons": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["a", "b"],
                "additionalProperties": False,
                "properties": {
                    "a": {"type": "string"},
                    "b": {"type": "string"},
                    "quantity": {"enum": list(QUANTITIES)},
                    "burn_in": {"type": "number", "minimum": 0},
                    "window_end": {"type": "number"},
                },
            },
        },
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "directory": {"type": "string"},
                "precision": {"type": "integer", "minimum": 1, "maximum": 17},
            },
        },
    },
}


class ConfigError(ValueError):
    """Invalid experiment configuration; the message starts with the offending location."""


def _where(path) -> str:
    out = "config"
    for part in path:
        out += f"[{part}]" if isinstance(part, int) else f".{part}"
    return out


@dataclass(frozen=True)
class Piece:
    lo: float
    hi: float
    coeffs: tuple[float, ...]

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return np.polynomial.polynomial.polyval(x, self.coeffs)


@dataclass(frozen=True)
class PiecewiseSpec:
    """Closed intervals with polynomials of degree <= 2; zero elsewhere, first piece wins at shared ends."""

    pieces: tuple[Piece, ...]

    def evaluate(self, grid: Grid) -> np.ndarray:
        x = grid.x
        tol = 1e-9 * grid.h
        out = np.zeros_like(x)
        done = np.zeros(x.shape, dtype=bool)
        for piece in self.pieces:
            mask = (x >= piece.lo - tol) & (x <= piece.hi + tol) & ~done
            out[mask] = piece(x[mask])
            done |= mask
        if out.min() < -1e-12:
            raise ConfigError(f"initial datum is negative at x={x[np.argmin(out)]:.6g}")
        return np.maximum(out, 0.0)


def _piece_from(doc: dict) -> Piece:
    lo, hi = doc["interval"]
    if "coeffs" in doc:
        coeffs = tuple(float(c) for c in doc["coeffs"])
    else:
        s = float(doc["scale"])
        r1, r2 = (float(r) for r in doc["roots"])
        # s (x - r1)(r2 - x) = s(-r1 r2) + s(r1 + r2) x - s x^2
        coeffs = (-s * r1 * r2, s * (r1 + r2), -s)
    return Piece(float(lo), float(hi), coeffs)


def _piecewise(items: list, path: list) -> PiecewiseSpec:
    pieces = []
    for i, item in enumerate(items):
        p = _piece_from(item)
        if not p.hi >= p.lo:
            raise ConfigError(f"{_where(path + [i, 'interval'])}: interval end precedes start")
        pieces.append(p)
    ordered = sorted(pieces, key=lambda p: p.lo)
    for left, right in zip(ordered, ordered[1:]):
        if right.lo < left.hi - 1e-12:
            raise ConfigError(f"{_where(path)}: intervals [{left.lo}, {left.hi}] and "
                              f"[{right.lo}, {right.hi}] overlap")
    return PiecewiseSpec(tuple(pieces))


@dataclass(frozen=True)
class RunSpec:
    label: str
    model: str
    params: dict
    estimator: str = "argmax"

    def boltzmann_params(self) -> ModelParams:
        p = self.params
        return ModelParams(k=p["k"], a=p["a"], dt=p["dt"], t_end=p.get("t_end", 0.0),
                           sigma=p.get("sigma", math.sqrt(2.0)),
                           positivity=p.get("positivity", "strict"))

    def fbp_params(self) -> ModelParams:
        p = self.params
        return ModelParams(k=p.get("k", 0.0), a=p["a"], dt=p["dt"], t_end=p.get("t_end", 0.0),
                           sigma=p.get("sigma", math.sqrt(2.0)))

    def layer_params(self) -> LayerParams:
        """With ``k`` given, ``dt``/``t_end`` are slow times and ``epsilon`` defaults to ``1/k``."""
        p = self.params
        k = p.get("k")
        if k is None:
            return LayerParams(a=p["a"], dt=p["dt"], tau_end=p.get("t_end", 0.0),
                               epsilon=p.get("epsilon", 0.0), sigma=p.get("sigma", math.sqrt(2.0)))
        if k <= 0:
            raise ValueError("k must be positive for the fast-time rescaling")
        return LayerParams(a=p["a"], dt=k * p["dt"], tau_end=k * p.get("t_end", 0.0),
                           epsilon=p.get("epsilon", 1.0 / k), sigma=p.get("sigma", math.sqrt(2.0)))

    def limit_params(self) -> LimitParams:
        p = self.params
        return LimitParams(c=p.get("c", 0.0), dt=p["dt"], t_end=p.get("t_end", 0.0),
                           sigma=p.get("sigma", math.sqrt(2.0)))

    def build_params(self):
        return {
            "boltzmann": self.boltzmann_params,
            "fbp": self.fbp_params,
            "layer": self.layer_params,
            "limit": self.limit_params,
            "consecutive": self.limit_params,
        }[self.model]()

    @property
    def t_end(self) -> float:
        return float(self.params.get("t_end", 0.0))

    @property
    def dt(self) -> float:
        return float(self.params["dt"])


@dataclass(frozen=True)
class ComparisonSpec:
    a: str
    b: str
    quantity: str = "price"
    burn_in: float = 0.1
    window_end: float | None = None


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    grid: Grid
    f_init: PiecewiseSpec
    g_init: PiecewiseSpec
    runs: tuple[RunSpec, ...]
    stride: int | None
    snapshots: tuple[float, ...]
    comparisons: tuple[ComparisonSpec, ...]
    directory: str
    precision: int

    def initial_data(self) -> tuple[np.ndarray, np.ndarray]:
        return self.f_init.evaluate(self.grid), self.g_init.evaluate(self.grid)

    def run(self, label: str) -> RunSpec:
        for r in self.runs:
            if r.label == label:
                return r
        raise KeyError(label)


def _expand_runs(items: list) -> list[RunSpec]:
    runs = []
    for i, item in enumerate(items):
        path = ["runs", i]
        model = item["model"]
        base = dict(item["params"])
        sweep = item.get("sweep")
        variants = [(item["label"], base)]
        if sweep:
            lengths = {len(v) for v in sweep.values()}
            if len(lengths) != 1:
                raise ConfigError(f"{_where(path + ['sweep'])}: swept lists must have equal length")
            n = lengths.pop()
            variants = []
            for j in range(n):
                params = dict(base)
                params.update({key: vals[j] for key, vals in sweep.items()})
                variants.append((f"{item['label']}-{j}", params))
        required, optional = MODEL_KEYS[model]
        for label, params in variants:
            keys = set(params)
            missing = required - keys
            if missing:
                raise ConfigError(f"{_where(path + ['params'])}: missing {sorted(missing)} for model {model!r}")
            unknown = keys - required - optional
            if unknown:
                raise ConfigError(f"{_where(path + ['params'])}: unknown {sorted(unknown)} for model {model!r}")
            for key, val in params.items():
                if key != "positivity" and not isinstance(val, (int, float)):
                    raise ConfigError(f"{_where(path + ['params', key])}: must be a number")
            if "positivity" in params and model != "boltzmann":
                raise ConfigError(f"{_where(path + ['params', 'positivity'])}: only for boltzmann runs")
            runs.append(RunSpec(label, model, params, item.get("estimator", "argmax")))
    return runs


def parse_config(doc: dict) -> ExperimentConfig:
    """Validate a decoded JSON document and resolve everything derived from it."""
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        raise ConfigError(f"{_where(err.absolute_path)}: {err.message}")

    gd = doc["grid"]
    try:
        if "h" in gd:
            grid = Grid.from_spacing(float(gd["x_min"]), float(gd["x_max"]), float(gd["h"]))
        else:
            grid = Grid(float(gd["x_min"]), float(gd["x_max"]), int(gd["n_cells"]))
    except ValueError as exc:
        raise ConfigError(f"config.grid: {exc}") from None

    f_init = _piecewise(doc["initial_data"]["f"], ["initial_data", "f"])
    g_init = _piecewise(doc["initial_data"]["g"], ["initial_data", "g"])
    for name, spec in (("f", f_init), ("g", g_init)):
        try:
            spec.evaluate(grid)
        except ConfigError as exc:
            raise ConfigError(f"config.initial_data.{name}: {exc}") from None

    runs = _expand_runs(doc["runs"])
    labels = [r.label for r in runs]
    if len(set(labels)) != len(labels):
        raise ConfigError("config.runs: run labels must be unique")
    for run in runs:
        try:
            params = run.build_params()
            if run.model in ("boltzmann", "fbp", "layer"):
                steps = shift_steps(params.a, grid)
                if run.model == "fbp" and steps == 0:
                    raise ValueError("transform undefined for zero transaction cost")
        except ValueError as exc:
            raise ConfigError(f"config.runs[{run.label}].params: {exc}") from None

    obs = doc.get("observers", {})
    comparisons = []
    for i, c in enumerate(doc.get("comparisons", [])):
        for side in ("a", "b"):
            if c[side] not in labels:
                raise ConfigError(f"{_where(['comparisons', i, side])}: unknown run label {c[side]!r}")
        comparisons.append(ComparisonSpec(c["a"], c["b"], c.get("quantity", "price"),
                                          float(c.get("burn_in", 0.1)), c.get("window_end")))
    out = doc.get("output", {})
    return ExperimentConfig(
        name=doc.get("name", "experiment"),
        grid=grid,
        f_init=f_init,
        g_init=g_init,
        runs=tuple(runs),
        stride=obs.get("stride"),
        snapshots=tuple(float(t) for t in obs.get("snapshots", [])),
        comparisons=tuple(comparisons),
        directory=out.get("directory", "output"),
        precision=int(out.get("precision", 17)),
    )


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    return parse_config(doc)


# ---------------------------------------------------------------- presets

PRESETS = ("example1", "example2", "example3", "example4")
SCALES = ("desk", "paper")


def _example1(scale: str) -> dict:
    h = 0.002
    if scale == "paper":
        k, dt, fbp_dt, t_end, stride = 1e6, 1e-6, 1e-6, 1.0, 1000
    else:
        k, dt, fbp_dt, t_end, stride = 1e3, 1e-3, 1e-3, 0.5, 10
    return {
        "name": f"example1-{scale}",
        "grid": {"x_min": 0.0, "x_max": 1.0, "h": h},
        "initial_data": {
            "f": [{"interval": [0.0, 0.5], "coeffs": [1.0]},
                  {"interval": [0.5, 0.6], "coeffs": [6.0, -10.0]}],
            "g": [{"interval": [0.6, 1.0], "coeffs": [-6.0, 10.0]}],
        },
        "runs": [
            # the printed data have max g = 4, so dt*k*max > 1 with dt = 1/k
            {"label": "boltzmann", "model": "boltzmann",
             "params": {"k": k, "a": 10 * h, "sigma": 1.0, "dt": dt, "t_end": t_end, "positivity": "warn"}},
            {"label": "fbp", "model": "fbp",
             "params": {"k": k, "a": 10 * h, "sigma": 1.0, "dt": fbp_dt, "t_end": t_end}},
        ],
        "observers": {"stride": stride, "snapshots": [t_end]},
        "comparisons": [{"a": "boltzmann", "b": "fbp", "quantity": "price", "burn_in": 0.1},
                        {"a": "boltzmann", "b": "fbp", "quantity": "f"},
                        {"a": "boltzmann", "b": "fbp", "quantity": "g"}],
        "output": {"directory": f"output/example1-{scale}", "precision": 17},
    }


def _example2(scale: str) -> dict:
    if scale == "paper":
        h, ks, stride = 1e-3, [1e5, 1e6], 1000
    else:
        h, ks, stride = 2e-3, [1e4, 1e5], 100
    return {
        "name": f"example2-{scale}",
        "grid": {"x_min": 0.0, "x_max": 1.0, "h": h},
        "initial_data": {
            "f": [{"interval": [0.3, 0.5], "scale": 15.0, "roots": [0.3, 0.5]}],
            "g": [{"interval": [0.55, 0.8], "scale": 15.0, "roots": [0.55, 0.8]}],
        },
        "runs": [
            {"label": "boltzmann", "model": "boltzmann",
             "params": {"k": ks[0], "a": 10 * h, "sigma": 1.0, "dt": 1.0 / ks[0], "t_end": 0.5},
             "sweep": {"k": ks, "dt": [1.0 / k for k in ks]}},
        ],
        "observers": {"stride": stride, "snapshots": [0.5]},
        "comparisons": [{"a": "boltzmann-0", "b": "boltzmann-1", "quantity": "price"}],
        "output": {"directory": f"output/example2-{scale}", "precision": 17},
    }


def _example3(scale: str) -> dict:
    h = 2e-3
    return {
        "name": f"example3-{scale}",
        "grid": {"x_min": 0.0, "x_max": 1.0, "h": h},
        "initial_data": {
            "f": [{"interval": [0.65, 0.95], "scale": 15.0, "roots": [0.65, 0.95]}],
            "g": [{"interval": [0.25, 0.5], "scale": 12.0, "roots": [0.25, 0.5]}],
        },
        "runs": [
            {"label": "layer", "model": "layer",
             "params": {"k": 500.0, "a": 10 * h, "sigma": 1.0, "dt": 2e-4, "t_end": 1.0}},
        ],
        "observers": {"stride": 50, "snapshots": [0.0, 1.0]},
        "comparisons": [],
        "output": {"directory": f"output/example3-{scale}", "precision": 17},
    }


def _example4(scale: str) -> dict:
    if scale == "paper":
        h, k, dt, stride = 2e-5, 5e4, 2e-5, 500
    else:
        h, k, dt, stride = 2e-3, 500.0, 1e-3, 50
    a = h
    return {
        "name": f"example4-{scale}",
        "grid": {"x_min": 0.0, "x_max": 20.0, "h": h},
        "initial_data": {
            "f": [{"interval": [9.0, 9.5], "coeffs": [1.0]},
                  {"interval": [9.5, 10.0], "coeffs": [20.0, -2.0]}],
            "g": [{"interval": [10.0, 11.0], "coeffs": [-20.0, 2.0]}],
        },
        "runs": [
            {"label": "boltzmann", "model": "boltzmann",
             "params": {"k": k, "a": a, "sigma": 1.0, "dt": dt, "t_end": 1.0}},
            {"label": "limit", "model": "limit",
             "params": {"c": k * a, "sigma": 1.0, "dt": dt, "t_end": 1.0}},
            {"label": "consecutive", "model": "consecutive",
             "params": {"c": k * a, "sigma": 1.0, "dt": dt, "t_end": 1.0}},
        ],
        "observers": {"stride": stride, "snapshots": [1.0]},
        "comparisons": [
            {"a": "boltzmann", "b": "limit", "quantity": q} for q in QUANTITIES
        ] + [
            {"a": "boltzmann", "b": "consecutive", "quantity": q} for q in QUANTITIES
        ] + [{"a": "limit", "b": "consecutive", "quantity": "price"}],
        "output": {"directory": f"output/example4-{scale}", "precision": 17},
    }


_BUILDERS = {"example1": _example1, "example2": _example2, "example3": _example3, "example4": _example4}


def preset_document(name: str, scale: str = "desk") -> dict:
    if name not in _BUILDERS:
        raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    if scale not in SCALES:
        raise ConfigError(f"unknown scale {scale!r}; choose from {', '.join(SCALES)}")
    return copy.deepcopy(_BUILDERS[name](scale))


def preset_config(name: str, scale: str = "desk", directory: str | None = None) -> ExperimentConfig:
    doc = preset_document(name, scale)
    if directory is not None:
        doc["output"]["directory"] = directory
    return parse_config(doc)

