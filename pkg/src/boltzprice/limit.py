"""High-frequency scaling limit (k -> inf, a -> 0, k a = c) and the consecutive-limit reference.

The simultaneous limit is a drift-diffusion system
``f_t = c (fg)_x + D f_xx``, ``g_t = -c (fg)_x + D g_xx``. Taking first
``k -> inf`` and then ``a -> 0`` instead gives a potential ``F0`` that
solves the heat equation and whose root is the price.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np

from .diagnostics import DiagnosticsRecord, PriceSeries, make_record, price_estimate_boltzmann
from .errors import SolverError
from .fbp import extract_price
from .grid import Grid, HeatStepper, integrate, negative_part, positive_part


@dataclass(frozen=True)
class LimitParams:
    c: float
    dt: float
    t_end: float = 0.0
    sigma: float = math.sqrt(2.0)

    def __post_init__(self) -> None:
        if self.c < 0:
            raise ValueError("drift strength c must be non-negative")
        if self.dt <= 0 or self.t_end < 0 or self.sigma <= 0:
            raise ValueError("need dt > 0, t_end >= 0, sigma > 0")

    @property
    def diffusion(self) -> float:
        return 0.5 * self.sigma**2

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))


def flux_derivative(q: np.ndarray, h: float) -> np.ndarray:
    """Central difference of ``q``; zero at the walls (reflected ghosts)."""
    d = np.zeros_like(q)
    d[1:-1] = (q[2:] - q[:-2]) / (2.0 * h)
    return d


class LimitSolver:
    def __init__(self, grid: Grid, params: LimitParams):
        self.grid = grid
        self.params = params
        self.heat = HeatStepper(grid.n_nodes, params.diffusion, params.dt, grid.h)

    def step(self, f: np.ndarray, g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        p = self.params
        drift = p.dt * p.c * flux_derivative(f * g, self.grid.h)
        scale = max(float(f.max()), float(g.max()))
        # one explicit drift update may move at most half the peak density
        if float(np.abs(drift).max()) > 0.5 * scale:
            raise SolverError("drift step too large")
        f_new = self.heat(f + drift)
        g_new = self.heat(g - drift)
        if not (np.all(np.isfinite(f_new)) and np.all(np.isfinite(g_new))):
            raise SolverError("non-finite values in the drift-diffusion step")
        return f_new, g_new


def step_limit(f: np.ndarray, g: np.ndarray, params: LimitParams, grid: Grid) -> tuple[np.ndarray, np.ndarray]:
    return LimitSolver(grid, params).step(grid.check(f, "f"), grid.check(g, "g"))


def run_limit(f: np.ndarray, g: np.ndarray, params: LimitParams, grid: Grid, stride: int = 1,
              estimator: str = "argmax", observers: Iterable[Callable] = (),
              ) -> tuple[np.ndarray, np.ndarray, PriceSeries, list[DiagnosticsRecord]]:
    """Records carry NaN volume (trades are not resolved) and the measured total-mass loss rate."""
    if stride < 1:
        raise ValueError("stride must be >= 1")
    solver = LimitSolver(grid, params)
    observers = list(observers)
    f = grid.check(f, "f").copy()
    g = grid.check(g, "g").copy()
    series = PriceSeries(estimator)
    records: list[DiagnosticsRecord] = []
    last = [0.0, integrate(f, grid) + integrate(g, grid), math.nan]

    def observe(t: float, add_to_series: bool) -> None:
        try:
            price = price_estimate_boltzmann(f, g, grid, estimator)
            carried = False
        except SolverError:
            price, carried = last[2], True
        if add_to_series:
            series.append(t, price, carried)
        mass = integrate(f, grid) + integrate(g, grid)
        rate = 0.0 if t == last[0] else (last[1] - mass) / (t - last[0])
        last[:] = [t, mass, price]
        rec = make_record(t, f, g, grid, volume=math.nan, leakage=rate, price=price, estimator=estimator)
        records.append(rec)
        for obs in observers:
            obs(f, g, rec)

    observe(0.0, False)
    n_steps = params.n_steps
    for n in range(1, n_steps + 1):
        try:
            f, g = solver.step(f, g)
        except SolverError as err:
            raise err.at_step(n, partial=(f, g, series, records)) from err
        if n % stride == 0 or n == n_steps:
            observe(n * params.dt, True)
    return f, g, series, records


def consecutive_potential(f: np.ndarray, g: np.ndarray, grid: Grid) -> np.ndarray:
    """``F0(x) = int_x^inf f - int_-inf^x g`` by cumulative trapezoids, truncated at the walls."""
    f = grid.check(f, "f")
    g = grid.check(g, "g")
    h = grid.h
    cells_f = 0.5 * h * (f[1:] + f[:-1])
    cells_g = 0.5 * h * (g[1:] + g[:-1])
    right_f = np.concatenate((np.cumsum(cells_f[::-1])[::-1], [0.0]))
    left_g = np.concatenate(([0.0], np.cumsum(cells_g)))
    return right_f - left_g


def derivative_densities(F: np.ndarray, grid: Grid) -> tuple[np.ndarray, np.ndarray]:
    """``f0 = -d/dx F+`` and ``g0 = d/dx F-`` by central differences."""
    return -np.gradient(positive_part(F), grid.h), np.gradient(negative_part(F), grid.h)


def run_consecutive(f: np.ndarray, g: np.ndarray, params: LimitParams, grid: Grid, stride: int = 1,
                    observers: Iterable[Callable] = ()) -> tuple[np.ndarray, PriceSeries, list[DiagnosticsRecord]]:
    """Heat-evolve the potential; returns it at ``t_end`` with the root series and records."""
    F = consecutive_potential(f, g, grid)
    series = PriceSeries("root")
    records: list[DiagnosticsRecord] = []
    if not np.any(F):
        return F, series, records
    heat = HeatStepper(grid.n_nodes, params.diffusion, params.dt, grid.h)
    observers = list(observers)

    def observe(t: float) -> None:
        try:
            price = extract_price(F, grid)[0]
        except SolverError as err:
            raise err.at_step(n, partial=(F, series, records)) from err
        series.append(t, price)
        f0, g0 = derivative_densities(F, grid)
        rec = make_record(t, f0, g0, grid, volume=math.nan, leakage=math.nan, price=price, estimator="root")
        records.append(rec)
        for obs in observers:
            obs(f0, g0, rec)

    n = 0
    observe(0.0)
    n_steps = params.n_steps
    for n in range(1, n_steps + 1):
        F = heat(F)
        if n % stride == 0 or n == n_steps:
            observe(n * params.dt)
    return F, series, records


def consecutive_limit_reference(f: np.ndarray, g: np.ndarray, params: LimitParams, grid: Grid,
                                stride: int = 1) -> tuple[np.ndarray, np.ndarray, PriceSeries]:
    """Densities at ``t_end`` and the root trajectory of the heat-evolved potential."""
    F, series, _ = run_consecutive(f, g, params, grid, stride)
    f0, g0 = derivative_densities(F, grid)
    return f0, g0, series


@dataclass(frozen=True)
class JumpWitness:
    """One-sided limits of ``v`` at ``price``, read off nodes outside the difference stencil."""

    price: float
    left: float
    right: float
    slope: float

    @property
    def jump(self) -> float:
        return self.right - self.left

    def is_discontinuous(self, h: float, factor: float = 10.0) -> bool:
        return self.left > 0.0 > self.right and abs(self.jump) > factor * h * abs(self.slope)


def jump_witness(v: np.ndarray, grid: Grid, price: float) -> JumpWitness:
    """Extrapolate ``v`` linearly to ``price`` from two nodes on each side.

    Central differences smear a kink of the potential over the two nodes
    next to the root, so the fit uses nodes ``j-2, j-1`` and ``j+2, j+3``
    around the cell ``[x_j, x_j+1]`` that holds the price.
    """
    v = grid.check(v, "v")
    x = grid.x
    j = int(math.floor((price - grid.x_min) / grid.h))
    if j < 2 or j + 3 > grid.n_cells:
        raise ValueError("price too close to the boundary for a jump witness")
    sl = (v[j - 1] - v[j - 2]) / grid.h
    sr = (v[j + 3] - v[j + 2]) / grid.h
    left = v[j - 1] + sl * (price - x[j - 1])
    right = v[j + 2] + sr * (price - x[j + 2])
    return JumpWitness(float(price), float(left), float(right), float(max(abs(sl), abs(sr))))
