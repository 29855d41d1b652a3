"""Semi-implicit time stepping of the Boltzmann-type buyer/vendor system.

Collisions (trades) are explicit, diffusion is implicit with reflecting
(homogeneous Neumann) walls. A trade at price ``x`` sends the buyer to
``x - a`` and the vendor to ``x + a``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import Callable, Iterable

import numpy as np

from .diagnostics import DiagnosticsRecord, PriceSeries, make_record, price_estimate_boltzmann
from .errors import SolverError
from .grid import EPS_POS, Grid, HeatStepper, integrate, shift_field, shift_steps

logger = logging.getLogger(__name__)

POSITIVITY_POLICIES = ("strict", "warn")


@dataclass(frozen=True)
class ModelParams:
    """Physical constants and step controls.

    ``positivity="strict"`` enforces the collision guard ``dt*k*B <= 1`` and
    rejects negative densities; ``"warn"`` only logs both and keeps going
    (non-finite values still abort).
    """

    k: float
    a: float
    dt: float
    t_end: float = 0.0
    sigma: float = math.sqrt(2.0)
    positivity: str = "strict"

    def __post_init__(self) -> None:
        if self.k < 0:
            raise ValueError("transaction rate k must be non-negative")
        if self.a < 0:
            raise ValueError("transaction cost a must be non-negative")
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.t_end < 0:
            raise ValueError("t_end must be non-negative")
        if self.positivity not in POSITIVITY_POLICIES:
            raise ValueError(f"positivity must be one of {POSITIVITY_POLICIES}")

    @property
    def diffusion(self) -> float:
        return 0.5 * self.sigma**2

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))


@dataclass(frozen=True)
class BoltzmannState:
    f: np.ndarray
    g: np.ndarray
    t: float = 0.0
    # mass lost through the shifted gain terms at the walls, cumulative
    leaked_f: float = 0.0
    leaked_g: float = 0.0


def transaction_volume(state: BoltzmannState, params: ModelParams) -> np.ndarray:
    """Trades per unit price and time, ``k f g``."""
    return params.k * state.f * state.g


class BoltzmannSolver:
    """Stepper bound to one grid and parameter set (the heat matrix is factorised once)."""

    def __init__(self, grid: Grid, params: ModelParams):
        self.grid = grid
        self.params = params
        self.steps = shift_steps(params.a, grid)
        self.heat = HeatStepper(grid.n_nodes, params.diffusion, params.dt, grid.h)
        self.min_value = 0.0
        self._warned = False

    def _guard(self, f: np.ndarray, g: np.ndarray) -> None:
        p = self.params
        bound = p.dt * p.k * max(float(f.max()), float(g.max()))
        if bound <= 1.0:
            return
        if p.positivity == "strict":
            raise SolverError(f"time step too large for collision term (dt*k*max = {bound:.3g} > 1)")
        if not self._warned:
            logger.warning("collision guard violated: dt*k*max density = %.3g > 1", bound)
            self._warned = True

    def collision_rhs(self, f: np.ndarray, g: np.ndarray) -> tuple[np.ndarray, np.ndarray, float, float]:
        """Explicit half of the step; also returns the mass each density loses at the walls."""
        p, s, w = self.params, self.steps, self.grid.weights
        prod = f * g
        gain_f = shift_field(prod, s, +1)
        gain_g = shift_field(prod, s, -1)
        rate = p.dt * p.k
        loss = float(w @ prod)
        leak_f = rate * (loss - float(w @ gain_f))
        leak_g = rate * (loss - float(w @ gain_g))
        return f + rate * (gain_f - prod), g + rate * (gain_g - prod), leak_f, leak_g

    def _positivity(self, u: np.ndarray, name: str) -> np.ndarray:
        if not np.all(np.isfinite(u)):
            raise SolverError(f"positivity lost: non-finite values in {name}")
        lo = float(u.min())
        self.min_value = min(self.min_value, lo)
        if lo >= 0.0:
            return u
        if self.params.positivity == "warn":
            return u
        if lo < -EPS_POS:
            raise SolverError(f"positivity lost: min({name}) = {lo:.3e}")
        logger.debug("clamping round-off negatives in %s (min %.3e)", name, lo)
        return np.maximum(u, 0.0)

    def step(self, state: BoltzmannState) -> BoltzmannState:
        self._guard(state.f, state.g)
        rf, rg, leak_f, leak_g = self.collision_rhs(state.f, state.g)
        f = self._positivity(self.heat(rf), "f")
        g = self._positivity(self.heat(rg), "g")
        return BoltzmannState(f, g, state.t + self.params.dt,
                              state.leaked_f + leak_f, state.leaked_g + leak_g)


def step_boltzmann(state: BoltzmannState, params: ModelParams, grid: Grid) -> BoltzmannState:
    return BoltzmannSolver(grid, params).step(state)


Observer = Callable[[BoltzmannState, DiagnosticsRecord], None]


def _record(state: BoltzmannState, grid: Grid, params: ModelParams, leak_rate: float,
            price: float, estimator: str) -> DiagnosticsRecord:
    volume = integrate(transaction_volume(state, params), grid)
    return make_record(state.t, state.f, state.g, grid, volume=volume, leakage=leak_rate,
                       price=price, estimator=estimator)


def run_boltzmann(initial: BoltzmannState, params: ModelParams, grid: Grid,
                  observers: Iterable[Observer] = (), stride: int = 1,
                  estimator: str = "argmax") -> tuple[BoltzmannState, PriceSeries, list[DiagnosticsRecord]]:
    """Step to ``params.t_end``, recording diagnostics every ``stride`` steps.

    The price series starts after the first step; when no trading takes
    place the previous price is carried forward and flagged.
    """
    if stride < 1:
        raise ValueError("stride must be >= 1")
    solver = BoltzmannSolver(grid, params)
    state = replace(initial, f=grid.check(initial.f, "f").copy(), g=grid.check(initial.g, "g").copy())
    observers = list(observers)
    series = PriceSeries(estimator)
    records: list[DiagnosticsRecord] = []
    n_steps = params.n_steps
    t0 = state.t

    def observe(price: float, leak_rate: float) -> None:
        rec = _record(state, grid, params, leak_rate, price, estimator)
        records.append(rec)
        for obs in observers:
            obs(state, rec)

    try:
        initial_price = price_estimate_boltzmann(state.f, state.g, grid, estimator)
    except SolverError:
        initial_price = math.nan
    observe(initial_price, 0.0)
    last_price = initial_price
    for n in range(1, n_steps + 1):
        before = state
        try:
            state = solver.step(state)
        except SolverError as err:
            raise err.at_step(n, partial=(before, series, records)) from err
        state = replace(state, t=t0 + n * params.dt)
        if n % stride and n != n_steps:
            continue
        carried = False
        try:
            price = price_estimate_boltzmann(state.f, state.g, grid, estimator)
        except SolverError:
            price, carried = last_price, True
        series.append(state.t, price, carried)
        last_price = price
        leak_rate = ((state.leaked_f - before.leaked_f) + (state.leaked_g - before.leaked_g)) / params.dt
        observe(price, leak_rate)
    return state, series, records


def combined_density(f: np.ndarray, g: np.ndarray, steps: int) -> np.ndarray:
    """``f(x) + g(x + a)`` on the nodes where ``x + a`` stays inside the domain."""
    n = f.shape[0]
    return f[: n - steps] + g[steps:]


def mean_price_budget(old: BoltzmannState, new: BoltzmannState, params: ModelParams,
                      grid: Grid) -> dict[str, float]:
    """Split the one-step change of the first moments into trade, wall and edge terms.

    ``trade`` is the interior drift ``-/+ a dt integral(mu)`` of the old state,
    ``wall`` the diffusive flux through the reflecting walls
    ``D dt (u_0 - u_N)`` of the new state, ``edge`` what the trades at the
    first/last ``s`` nodes contribute beyond ``trade``. The three add up to
    the actual change to round-off.
    """
    s = shift_steps(params.a, grid)
    wx = grid.weights * grid.x
    prod = old.f * old.g
    rate = params.dt * params.k
    volume_term = params.a * rate * integrate(prod, grid)
    coll_f = rate * float(wx @ (shift_field(prod, s, +1) - prod))
    coll_g = rate * float(wx @ (shift_field(prod, s, -1) - prod))
    D = params.diffusion
    out = {}
    for name, u_old, u_new, trade, coll in (
        ("f", old.f, new.f, -volume_term, coll_f),
        ("g", old.g, new.g, +volume_term, coll_g),
    ):
        wall = D * params.dt * (u_new[0] - u_new[-1])
        delta = float(wx @ u_new - wx @ u_old)
        out[f"delta_{name}"] = delta
        out[f"trade_{name}"] = trade
        out[f"wall_{name}"] = float(wall)
        out[f"edge_{name}"] = coll - trade
        out[f"residual_{name}"] = delta - coll - float(wall)
    return out
