"""Monitored quantities: masses, mean prices, traded-price estimators, error metrics."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import SolverError
from .grid import EPS_SUPP, Grid, integrate

ESTIMATORS = ("mean", "median", "argmax")


@dataclass(frozen=True)
class DiagnosticsRecord:
    t: float
    mass_f: float
    mass_g: float
    mean_bid: float
    mean_ask: float
    total_volume: float
    boundary_leakage: float
    price_estimate: float
    estimator: str

    def as_row(self) -> tuple[float, ...]:
        return (self.t, self.price_estimate, self.mass_f, self.mass_g, self.mean_bid,
                self.mean_ask, self.total_volume, self.boundary_leakage)


@dataclass
class PriceSeries:
    """Price trajectory; ``carried[i]`` marks values copied forward from an earlier time."""

    estimator: str
    times: list[float] = field(default_factory=list)
    prices: list[float] = field(default_factory=list)
    carried: list[bool] = field(default_factory=list)

    def append(self, t: float, price: float, carried: bool = False) -> None:
        if self.times and t <= self.times[-1]:
            raise ValueError("price series times must be strictly increasing")
        self.times.append(float(t))
        self.prices.append(float(price))
        self.carried.append(bool(carried))

    def __len__(self) -> int:
        return len(self.times)

    def as_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        return np.asarray(self.times, dtype=float), np.asarray(self.prices, dtype=float)


def mean_position(u: np.ndarray, grid: Grid) -> float:
    mass = integrate(u, grid)
    if mass <= EPS_SUPP:
        return math.nan
    return integrate(grid.x * u, grid) / mass


def first_moment(u: np.ndarray, grid: Grid) -> float:
    return integrate(grid.x * u, grid)


def _parabolic_vertex(y0: float, y1: float, y2: float) -> float:
    denom = y0 - 2.0 * y1 + y2
    if denom >= 0.0:
        return 0.0
    return float(np.clip(0.5 * (y0 - y2) / denom, -0.5, 0.5))


def traded_price_density(f: np.ndarray, g: np.ndarray, grid: Grid) -> np.ndarray:
    f = grid.check(f, "f")
    g = grid.check(g, "g")
    prod = f * g
    total = integrate(prod, grid)
    scale = float(f.max()) * float(g.max()) * (grid.x_max - grid.x_min)
    if not np.isfinite(total) or not total > EPS_SUPP**2 * scale:
        raise SolverError("price estimate undefined: no trading activity")
    return prod / total


def estimate_price(rho: np.ndarray, grid: Grid, estimator: str = "argmax") -> float:
    """Price estimate from a (not necessarily normalised) non-negative density."""
    if estimator not in ESTIMATORS:
        raise ValueError(f"unknown estimator {estimator!r}")
    x = grid.x
    total = integrate(rho, grid)
    if estimator == "mean":
        return integrate(x * rho, grid) / total
    if estimator == "median":
        cum = np.concatenate(([0.0], np.cumsum(0.5 * grid.h * (rho[1:] + rho[:-1]))))
        target = 0.5 * cum[-1]
        j = int(np.searchsorted(cum, target))
        if j == 0:
            return float(x[0])
        lo, hi = cum[j - 1], cum[j]
        frac = 0.0 if hi == lo else (target - lo) / (hi - lo)
        return float(x[j - 1] + frac * grid.h)
    j = int(np.argmax(rho))
    if 0 < j < rho.shape[0] - 1:
        return float(x[j] + grid.h * _parabolic_vertex(rho[j - 1], rho[j], rho[j + 1]))
    return float(x[j])


def price_estimate_boltzmann(f: np.ndarray, g: np.ndarray, grid: Grid, estimator: str = "argmax") -> float:
    """Estimate the agreed price from the density of currently traded prices ``f*g``."""
    return estimate_price(traded_price_density(f, g, grid), grid, estimator)


def support_width(u: np.ndarray, grid: Grid, threshold_fraction: float = 1e-3) -> float:
    """Length of the smallest interval holding every node with ``u > frac * max(u)``."""
    u = grid.check(u)
    top = float(u.max())
    if top <= 0.0:
        return 0.0
    idx = np.flatnonzero(u > threshold_fraction * top)
    return float(grid.x[idx[-1]] - grid.x[idx[0]])


def make_record(t: float, f: np.ndarray, g: np.ndarray, grid: Grid, *, volume: float,
                leakage: float, price: float, estimator: str) -> DiagnosticsRecord:
    return DiagnosticsRecord(
        t=float(t),
        mass_f=integrate(f, grid),
        mass_g=integrate(g, grid),
        mean_bid=mean_position(f, grid),
        mean_ask=mean_position(g, grid),
        total_volume=float(volume),
        boundary_leakage=float(leakage),
        price_estimate=float(price),
        estimator=estimator,
    )


@dataclass(frozen=True)
class ErrorMetrics:
    l1: float
    l2: float
    linf: float
    window_max: float = math.nan


def _field_metrics(a: np.ndarray, b: np.ndarray, grid: Grid) -> ErrorMetrics:
    if a.shape != b.shape or a.shape != (grid.n_nodes,):
        raise ValueError("fields live on incompatible grids")
    d = np.abs(a - b)
    return ErrorMetrics(
        l1=integrate(d, grid),
        l2=math.sqrt(integrate(d * d, grid)),
        linf=float(d.max()),
    )


def _series_metrics(a: PriceSeries, b: PriceSeries, burn_in: float, window_end: float | None) -> ErrorMetrics:
    ta, pa = a.as_arrays()
    tb, pb = b.as_arrays()
    if len(ta) == 0 or len(tb) == 0:
        raise ValueError("cannot compare empty price series")
    lo, hi = max(ta[0], tb[0]), min(ta[-1], tb[-1])
    tol = 1e-12 * max(1.0, abs(hi))
    keep = (ta >= lo - tol) & (ta <= hi + tol)
    if not keep.any():
        raise ValueError("price series do not overlap in time")
    t = ta[keep]
    d = np.abs(pa[keep] - np.interp(t, tb, pb))
    if len(t) > 1:
        l1 = float(np.trapezoid(d, t))
        l2 = math.sqrt(float(np.trapezoid(d * d, t)))
    else:
        l1 = l2 = 0.0
    end = hi if window_end is None else window_end
    win = (t >= burn_in - tol) & (t <= end + tol)
    window_max = float(d[win].max()) if win.any() else math.nan
    return ErrorMetrics(l1=l1, l2=l2, linf=float(d.max()), window_max=window_max)


def compare_runs(a, b, grid: Grid | None = None, *, burn_in: float = 0.1,
                 window_end: float | None = None) -> ErrorMetrics:
    """L1/L2/Linf distances between two fields (same grid) or two price series.

    Series are compared at the times of ``a``; ``b`` is linearly
    interpolated. ``window_max`` is the largest deviation on
    ``[burn_in, window_end]``.
    """
    if isinstance(a, PriceSeries) and isinstance(b, PriceSeries):
        return _series_metrics(a, b, burn_in, window_end)
    if isinstance(a, PriceSeries) or isinstance(b, PriceSeries):
        raise ValueError("cannot compare a price series with a field")
    if grid is None:
        raise ValueError("field comparison needs the grid")
    return _field_metrics(np.asarray(a, dtype=float), np.asarray(b, dtype=float), grid)
