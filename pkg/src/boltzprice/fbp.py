"""Free-boundary (Lasry-Lions) model through its transformed heat equation.

With lattice sums ``F(x) = sum_l f(x + a l)`` and ``G(x) = sum_l g(x - a l)``
the difference ``V = F - G`` solves a plain heat equation whose boundary
conditions couple ``x = 0`` with ``x = a`` and ``x = 1`` with ``x = 1 - a``.
The price is the zero of ``V`` and the densities are read back from ``V``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np

from .boltzmann import ModelParams
from .diagnostics import DiagnosticsRecord, PriceSeries, make_record
from .errors import SolverError
from .grid import (
    EPS_SUPP,
    BorderedTridiagonalSolver,
    Grid,
    integrate,
    negative_part,
    numerical_support,
    positive_part,
    shift_field,
    shift_steps,
)

logger = logging.getLogger(__name__)


def lattice_sum(u: np.ndarray, steps: int, direction: int = +1) -> np.ndarray:
    """``out[j] = sum_{l>=0} u[j + direction*l*steps]`` over in-range indices."""
    out = np.array(u, dtype=float)
    n = out.shape[0]
    if steps <= 0:
        raise ValueError("lattice sums need a positive shift")
    if direction > 0:
        hi = n - steps
        while hi > 0:
            lo = max(0, hi - steps)
            out[lo:hi] += out[lo + steps:hi + steps]
            hi = lo
    else:
        lo = steps
        while lo < n:
            hi = min(n, lo + steps)
            out[lo:hi] += out[lo - steps:hi - steps]
            lo = hi
    return out


def transform_initial(f: np.ndarray, g: np.ndarray, steps: int) -> np.ndarray:
    """``Phi = F - G`` for non-negative nodal densities ``f`` and ``g``."""
    if steps == 0:
        raise ValueError("transform undefined for zero transaction cost")
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    if f.shape != g.shape:
        raise ValueError("f and g must live on the same grid")
    return lattice_sum(f, steps, +1) - lattice_sum(g, steps, -1)


def reconstruct_densities(V: np.ndarray, steps: int) -> tuple[np.ndarray, np.ndarray]:
    v = (np.asarray(V, dtype=float)
         - shift_field(positive_part(V), steps, +1)
         + shift_field(negative_part(V), steps, -1))
    return positive_part(v), negative_part(v)


@dataclass(frozen=True)
class Crossing:
    price: float
    flux: float  # minus the slope of V across the crossing
    falling: bool  # V goes from positive to negative


def find_crossings(V: np.ndarray, grid: Grid) -> list[Crossing]:
    """All sign changes of ``V``, left to right.

    A run of exact zeros between a positive and a negative node counts as a
    single crossing located at the middle of the run.
    """
    V = grid.check(V, "V")
    x = grid.x
    nz = np.flatnonzero(V != 0.0)
    if nz.size < 2:
        return []
    sign = np.sign(V[nz])
    change = np.flatnonzero(sign[:-1] != sign[1:])
    out = []
    for c in change:
        i, k = int(nz[c]), int(nz[c + 1])
        if k == i + 1:
            price = x[i] + grid.h * V[i] / (V[i] - V[k])
        else:
            price = 0.5 * (x[i + 1] + x[k - 1])
        slope = (V[k] - V[i]) / (x[k] - x[i])
        out.append(Crossing(float(price), float(-slope), bool(V[i] > 0)))
    return out


def _select(crossings: list[Crossing]) -> Crossing:
    if not crossings:
        raise SolverError("price undefined: V has no root")
    for c in crossings:
        if c.falling:
            return c
    return crossings[0]


def extract_price(V: np.ndarray, grid: Grid) -> tuple[float, float]:
    """Price and flux at the leftmost positive-to-negative crossing of ``V``.

    Falls back to the leftmost crossing of either direction; warns when
    ``V`` has more than one zero.
    """
    crossings = find_crossings(V, grid)
    c = _select(crossings)
    if len(crossings) > 1:
        logger.warning("V has %d crossings; using the one at %.6g", len(crossings), c.price)
    return c.price, c.flux


@dataclass(frozen=True)
class WellPreparedness:
    sup_support_f: float
    inf_support_g: float
    satisfied: bool


def check_well_prepared(f: np.ndarray, g: np.ndarray, grid: Grid) -> WellPreparedness:
    """Buyers must sit (numerically) left of vendors."""
    sf = numerical_support(f, grid, EPS_SUPP)
    sg = numerical_support(g, grid, EPS_SUPP)
    sup_f = -math.inf if sf is None else sf[1]
    inf_g = math.inf if sg is None else sg[0]
    return WellPreparedness(sup_f, inf_g, sup_f <= inf_g)


def compatibility_slopes(f: np.ndarray, g: np.ndarray, grid: Grid, price: float) -> tuple[float, float]:
    """One-sided ``(-f'(p-), g'(p+))``; the free-boundary model wants them equal."""
    j = int(np.clip(math.floor((price - grid.x_min) / grid.h + 1e-9), 1, grid.n_cells - 2))
    return float(-(f[j] - f[j - 1]) / grid.h), float((g[j + 2] - g[j + 1]) / grid.h)


@dataclass(frozen=True)
class FBPState:
    V: np.ndarray
    t: float
    price: float
    flux: float


def shifted_neumann_matrix(n_nodes: int, steps: int, ratio: float) -> BorderedTridiagonalSolver:
    """``I - ratio * Laplacian`` with ghosts fixed by ``V_x(0) = V_x(a)`` and ``V_x(1) = V_x(1-a)``.

    Central differences at both ends give ``V[-1] = V[1] - V[s+1] + V[s-1]``
    and ``V[N+1] = V[N-1] - V[N-s-1] + V[N-s+1]``.
    """
    last = n_nodes - 1
    if steps < 1 or last - steps - 1 < 0:
        raise ValueError("shift must satisfy 1 <= s <= n_cells - 1")
    r = ratio
    diag = np.full(n_nodes, 1.0 + 2.0 * r)
    lower = np.full(n_nodes - 1, -r)
    upper = np.full(n_nodes - 1, -r)
    upper[0] = -2.0 * r
    lower[-1] = -2.0 * r
    extra = {
        0: {steps + 1: r, steps - 1: -r},
        last: {last - steps - 1: r, last - steps + 1: -r},
    }
    return BorderedTridiagonalSolver(lower, diag, upper, extra)


class FBPSolver:
    def __init__(self, grid: Grid, params: ModelParams):
        self.grid = grid
        self.params = params
        self.steps = shift_steps(params.a, grid)
        if self.steps == 0:
            raise ValueError("transform undefined for zero transaction cost")
        ratio = params.diffusion * params.dt / grid.h**2
        self.matrix = shifted_neumann_matrix(grid.n_nodes, self.steps, ratio)
        self._warned = False

    def locate(self, V: np.ndarray) -> tuple[float, float]:
        crossings = find_crossings(V, self.grid)
        c = _select(crossings)
        if len(crossings) > 1 and not self._warned:
            logger.warning("V has %d crossings; tracking the one at %.6g", len(crossings), c.price)
            self._warned = True
        return c.price, c.flux

    def initial_state(self, f: np.ndarray, g: np.ndarray, t: float = 0.0) -> FBPState:
        grid = self.grid
        f = grid.check(f, "f")
        g = grid.check(g, "g")
        prep = check_well_prepared(f, g, grid)
        if not prep.satisfied:
            logger.warning("initial data not well prepared: sup supp f = %.6g > inf supp g = %.6g",
                           prep.sup_support_f, prep.inf_support_g)
        V = transform_initial(f, g, self.steps)
        price, flux = self.locate(V)
        bid, ask = compatibility_slopes(f, g, grid, price)
        if not math.isclose(bid, ask, rel_tol=1e-2, abs_tol=1e-8):
            logger.warning("compatibility mismatch at p(0)=%.6g: -f'=%.6g, g'=%.6g", price, bid, ask)
        return FBPState(V, t, price, flux)

    def step(self, state: FBPState) -> FBPState:
        V = self.matrix.solve(state.V)
        if not np.all(np.isfinite(V)):
            raise SolverError("non-finite values in V")
        price, flux = self.locate(V)
        return FBPState(V, state.t + self.params.dt, price, flux)

    def densities(self, state: FBPState) -> tuple[np.ndarray, np.ndarray]:
        return reconstruct_densities(state.V, self.steps)


def step_fbp(state: FBPState, params: ModelParams, grid: Grid) -> FBPState:
    return FBPSolver(grid, params).step(state)


FBPObserver = Callable[[FBPState, DiagnosticsRecord], None]


def run_fbp(f: np.ndarray, g: np.ndarray, params: ModelParams, grid: Grid,
            observers: Iterable[FBPObserver] = (), stride: int = 1,
            ) -> tuple[FBPState, PriceSeries, list[DiagnosticsRecord]]:
    """Evolve the transformed variable from ``(f, g)`` to ``params.t_end``.

    Records use the flux as total volume (the free-boundary model trades
    only at the price) and the measured rate of total mass change as leakage.
    """
    if stride < 1:
        raise ValueError("stride must be >= 1")
    solver = FBPSolver(grid, params)
    observers = list(observers)
    series = PriceSeries("root")
    records: list[DiagnosticsRecord] = []
    state = solver.initial_state(f, g)
    t0 = state.t
    last = (t0, integrate(f, grid) + integrate(g, grid))

    def observe(st: FBPState) -> None:
        nonlocal last
        fr, gr = solver.densities(st)
        mass = integrate(fr, grid) + integrate(gr, grid)
        rate = 0.0 if st.t == last[0] else (last[1] - mass) / (st.t - last[0])
        last = (st.t, mass)
        series.append(st.t, st.price)
        rec = make_record(st.t, fr, gr, grid, volume=st.flux, leakage=rate,
                          price=st.price, estimator="root")
        records.append(rec)
        for obs in observers:
            obs(st, rec)

    observe(state)
    n_steps = params.n_steps
    for n in range(1, n_steps + 1):
        try:
            new = solver.step(state)
        except SolverError as err:
            raise err.at_step(n, partial=(state, series, records)) from err
        state = FBPState(new.V, t0 + n * params.dt, new.price, new.flux)
        if n % stride == 0 or n == n_steps:
            observe(state)
    return state, series, records
