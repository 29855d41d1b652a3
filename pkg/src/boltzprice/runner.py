"""Execute an experiment config and write its CSV artifacts.

Every run is single-threaded and deterministic; distinct runs may go to a
process pool (``BOLTZPRICE_THREADS``). Files are written by the parent in
config order, so output does not depend on scheduling.
"""
from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .boltzmann import BoltzmannState, run_boltzmann
from .config import ExperimentConfig, RunSpec
from .diagnostics import PriceSeries, compare_runs, make_record, price_estimate_boltzmann
from .errors import SolverError
from .fbp import reconstruct_densities, run_fbp
from .grid import Grid, integrate, shift_steps
from .layer import run_layer
from .limit import run_consecutive, run_limit

logger = logging.getLogger(__name__)

THREADS_ENV = "BOLTZPRICE_THREADS"
SERIES_COLUMNS = ("t", "price", "mass_f", "mass_g", "mean_bid", "mean_ask", "total_volume", "leakage")
FIELD_COLUMNS = ("x", "f", "g", "mu")
TRACE_COLUMNS = ("tau", "sup_support_f", "inf_support_g", "mean_bid", "mean_ask", "mass_A", "mass_B", "volume")
COMPARISON_COLUMNS = ("a", "b", "quantity", "l1", "l2", "linf", "window_max", "status")


@dataclass
class RunResult:
    label: str
    model: str
    rows: list[tuple] = field(default_factory=list)
    snapshots: dict[str, tuple[np.ndarray, np.ndarray, np.ndarray]] = field(default_factory=dict)
    final: tuple[np.ndarray, np.ndarray] | None = None
    trace: list[tuple] | None = None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None

    def price_series(self) -> PriceSeries:
        series = PriceSeries("csv")
        for row in self.rows:
            if math.isfinite(row[1]):
                series.append(row[0], row[1])
        return series


def time_tag(t: float) -> str:
    return f"{t:.6g}"


def _snapshot_plan(run: RunSpec, stride: int | None, snapshots: tuple[float, ...]) -> tuple[int, dict[int, list[str]]]:
    """Observer stride and, per observed step, the snapshot tags to write there.

    A requested time snaps to the nearest observed step; the final state is
    always written.
    """
    n_steps = int(round(run.t_end / run.dt))
    every = stride if stride is not None else max(n_steps, 1)
    plan: dict[int, list[str]] = {}

    def add(n: int, tag: str) -> None:
        tags = plan.setdefault(n, [])
        if tag not in tags:
            tags.append(tag)

    for t in snapshots:
        target = min(max(int(round(t / run.dt)), 0), n_steps)
        snapped = min(int(round(target / every)) * every, n_steps)
        if abs(n_steps - target) < abs(snapped - target):
            snapped = n_steps
        add(snapped, time_tag(t))
    add(n_steps, time_tag(run.t_end))
    return every, plan


def _nan_field(n: int) -> np.ndarray:
    return np.full(n, math.nan)


def execute_run(run: RunSpec, grid: Grid, f0: np.ndarray, g0: np.ndarray,
                stride: int | None, snapshots: tuple[float, ...]) -> RunResult:
    """Run one model; solver failures are captured in the result with whatever was observed."""
    result = RunResult(run.label, run.model)
    every, plan = _snapshot_plan(run, stride, snapshots)
    dt = run.dt

    def capture(step: int, f: np.ndarray, g: np.ndarray, mu: np.ndarray) -> None:
        for tag in plan.get(step, ()):
            result.snapshots[tag] = (f.copy(), g.copy(), mu.copy())

    try:
        if run.model == "boltzmann":
            params = run.boltzmann_params()

            def obs(state, rec):
                result.rows.append(rec.as_row())
                capture(int(round(state.t / dt)), state.f, state.g, params.k * state.f * state.g)

            state, _, _ = run_boltzmann(BoltzmannState(f0, g0), params, grid, [obs], every, run.estimator)
            result.final = (state.f, state.g)

        elif run.model == "fbp":
            params = run.fbp_params()
            steps = shift_steps(params.a, grid)

            def obs(state, rec):
                result.rows.append(rec.as_row())
                f, g = reconstruct_densities(state.V, steps)
                capture(int(round(state.t / dt)), f, g, _nan_field(grid.n_nodes))

            state, _, _ = run_fbp(f0, g0, params, grid, [obs], every)
            result.final = reconstruct_densities(state.V, steps)

        elif run.model == "layer":
            params = run.layer_params()
            k = run.params.get("k")
            result.trace = []

            def obs(state):
                t = state.tau / k if k else state.tau
                try:
                    price = price_estimate_boltzmann(state.alpha, state.beta, grid, run.estimator)
                except SolverError:
                    price = math.nan
                prod = state.alpha * state.beta
                rec = make_record(t, state.alpha, state.beta, grid, volume=integrate(prod, grid),
                                  leakage=math.nan, price=price, estimator=run.estimator)
                result.rows.append(rec.as_row())
                capture(int(round(state.tau / params.dt)), state.alpha, state.beta, prod)

            state, trace = run_layer(f0, g0, params, grid, every, [obs])
            result.trace = list(zip(trace.tau, trace.sup_support_f, trace.inf_support_g, trace.mean_bid,
                                    trace.mean_ask, trace.mass_A, trace.mass_B, trace.volume))
            result.final = (state.alpha, state.beta)

        elif run.model == "limit":
            params = run.limit_params()

            def obs(f, g, rec):
                result.rows.append(rec.as_row())
                capture(int(round(rec.t / dt)), f, g, _nan_field(grid.n_nodes))

            f, g, _, _ = run_limit(f0, g0, params, grid, every, run.estimator, [obs])
            result.final = (f, g)

        elif run.model == "consecutive":
            params = run.limit_params()
            last: list = []

            def obs(f, g, rec):
                result.rows.append(rec.as_row())
                last[:] = [f, g]
                capture(int(round(rec.t / dt)), f, g, _nan_field(grid.n_nodes))

            run_consecutive(f0, g0, params, grid, every, [obs])
            result.final = (last[0], last[1]) if last else (np.zeros_like(f0), np.zeros_like(g0))
        else:  # pragma: no cover - rejected by the schema
            raise ValueError(f"unknown model {run.model!r}")
    except SolverError as err:
        step = f"step {err.step}" if err.step is not None else "setup"
        result.error = f"{run.label} ({run.model}) failed at {step}: {err}"
        logger.error(result.error)
    return result


def _threads() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"{THREADS_ENV} must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ValueError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    return n


def run_all(cfg: ExperimentConfig) -> list[RunResult]:
    f0, g0 = cfg.initial_data()
    jobs = [(run, cfg.grid, f0, g0, cfg.stride, cfg.snapshots) for run in cfg.runs]
    workers = min(_threads(), len(jobs))
    if workers <= 1:
        return [execute_run(*job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(execute_run, *zip(*jobs)))


class CsvWriter:
    def __init__(self, directory: Path, precision: int):
        self.directory = directory
        self.precision = precision

    def fmt(self, value) -> str:
        if isinstance(value, str):
            return value
        return format(float(value), f".{self.precision}g")

    def write(self, name: str, header: tuple[str, ...], rows) -> Path:
        path = self.directory / name
        lines = [",".join(header)]
        lines.extend(",".join(self.fmt(v) for v in row) for row in rows)
        path.write_text("\n".join(lines) + "\n")
        return path


def compare(cfg: ExperimentConfig, results: dict[str, RunResult]) -> list[tuple]:
    rows = []
    for c in cfg.comparisons:
        ra, rb = results[c.a], results[c.b]
        if not (ra.ok and rb.ok):
            rows.append((c.a, c.b, c.quantity, math.nan, math.nan, math.nan, math.nan, "skipped"))
            continue
        try:
            if c.quantity == "price":
                m = compare_runs(ra.price_series(), rb.price_series(), burn_in=c.burn_in,
                                 window_end=c.window_end)
            else:
                idx = 0 if c.quantity == "f" else 1
                m = compare_runs(ra.final[idx], rb.final[idx], cfg.grid)
        except ValueError as exc:
            logger.warning("comparison %s/%s/%s failed: %s", c.a, c.b, c.quantity, exc)
            rows.append((c.a, c.b, c.quantity, math.nan, math.nan, math.nan, math.nan, "failed"))
            continue
        rows.append((c.a, c.b, c.quantity, m.l1, m.l2, m.linf, m.window_max, "ok"))
    return rows


def write_artifacts(cfg: ExperimentConfig, results: list[RunResult], directory: Path | None = None) -> Path:
    out = Path(directory if directory is not None else cfg.directory)
    out.mkdir(parents=True, exist_ok=True)
    writer = CsvWriter(out, cfg.precision)
    x = cfg.grid.x
    for res in results:
        writer.write(f"series_{res.label}.csv", SERIES_COLUMNS, res.rows)
        for tag, (f, g, mu) in res.snapshots.items():
            writer.write(f"fields_{res.label}_{tag}.csv", FIELD_COLUMNS, zip(x, f, g, mu))
        if res.trace is not None:
            writer.write(f"trace_{res.label}.csv", TRACE_COLUMNS, res.trace)
    by_label = {r.label: r for r in results}
    if cfg.comparisons:
        writer.write("comparisons.csv", COMPARISON_COLUMNS, compare(cfg, by_label))
    errors = [r.error for r in results if r.error]
    err_path = out / "error.txt"
    if errors:
        err_path.write_text("\n".join(errors) + "\n")
    elif err_path.exists():
        err_path.unlink()
    return out


def run_experiment(cfg: ExperimentConfig, directory: Path | None = None) -> tuple[int, list[RunResult]]:
    """Execute all runs and comparisons; exit status is 1 when any run failed."""
    results = run_all(cfg)
    write_artifacts(cfg, results, directory)
    return (0 if all(r.ok for r in results) else 1), results
