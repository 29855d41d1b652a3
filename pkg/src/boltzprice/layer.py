"""Fast-time initial layer: the trading ODEs on the ``tau = k t`` scale.

``alpha`` and ``beta`` are buyers and vendors seen on the fast clock. Without
diffusion every lattice ``x + a Z`` evolves on its own; the long-time state
has a closed form in terms of the lattice transform ``Phi``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

from .boltzmann import BoltzmannSolver, BoltzmannState, ModelParams
from .diagnostics import mean_position
from .errors import HypothesisError, SolverError
from .fbp import lattice_sum, transform_initial
from .grid import (
    EPS_SUPP,
    Grid,
    clamp_roundoff,
    integrate,
    negative_part,
    numerical_support,
    positive_part,
    shift_field,
    shift_steps,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class LayerParams:
    """``epsilon`` scales the diffusion ``D = epsilon * sigma**2 / 2``; 0 gives the pure ODEs."""

    a: float
    dt: float
    tau_end: float = 0.0
    epsilon: float = 0.0
    sigma: float = math.sqrt(2.0)

    def __post_init__(self) -> None:
        if self.a < 0 or self.dt <= 0 or self.tau_end < 0 or self.epsilon < 0 or self.sigma <= 0:
            raise ValueError("layer parameters need a >= 0, dt > 0, tau_end >= 0, epsilon >= 0, sigma > 0")

    @property
    def n_steps(self) -> int:
        return int(round(self.tau_end / self.dt))


@dataclass(frozen=True)
class LayerState:
    alpha: np.ndarray
    beta: np.ndarray
    tau: float = 0.0
    epsilon: float = 0.0


def default_layer_dt(f: np.ndarray, g: np.ndarray, steps: int) -> float:
    """Half the largest stable explicit step, ``0.5 / max(f + g(. + a))``."""
    top = float(np.max(f + shift_field(g, steps, +1)))
    if top <= 0.0:
        return 1.0
    return 0.5 / top


class LayerSolver:
    def __init__(self, grid: Grid, params: LayerParams):
        self.grid = grid
        self.params = params
        self.steps = shift_steps(params.a, grid)
        self._diffusive = None
        if params.epsilon > 0:
            # same scheme as the Boltzmann system with unit rate and damped diffusion
            inner = ModelParams(k=1.0, a=params.a, dt=params.dt,
                                sigma=params.sigma * math.sqrt(params.epsilon))
            self._diffusive = BoltzmannSolver(grid, inner)

    def step(self, state: LayerState) -> LayerState:
        a, b = state.alpha, state.beta
        dt = self.params.dt
        if dt * float(np.max(a + b)) > 1.0:
            raise SolverError("fast-time step too large")
        if self._diffusive is not None:
            nxt = self._diffusive.step(BoltzmannState(a, b, state.tau))
            return LayerState(nxt.f, nxt.g, state.tau + dt, state.epsilon)
        prod = a * b
        s = self.steps
        alpha = a + dt * (shift_field(prod, s, +1) - prod)
        beta = b + dt * (shift_field(prod, s, -1) - prod)
        return LayerState(clamp_roundoff(alpha, "alpha"), clamp_roundoff(beta, "beta"),
                          state.tau + dt, state.epsilon)


def step_layer(state: LayerState, params: LayerParams, grid: Grid) -> LayerState:
    return LayerSolver(grid, params).step(state)


def layer_conserved_sum(state: LayerState, steps: int) -> np.ndarray:
    """``alpha(x) + beta(x + a)``; constant in time for the pure ODEs."""
    if state.epsilon > 0:
        raise ValueError("the lattice sum is conserved only without diffusion")
    return state.alpha + shift_field(state.beta, steps, +1)


@dataclass(frozen=True)
class LayerHypothesis:
    condition_i: bool
    condition_ii: bool
    h_I: np.ndarray
    witness_i: tuple[float, float] | None = None
    witness_ii: tuple[float, float] | None = None

    @property
    def satisfied(self) -> bool:
        return self.condition_i and self.condition_ii


def check_hypothesis(f: np.ndarray, g: np.ndarray, steps: int, grid: Grid | None = None) -> LayerHypothesis:
    """Walk every ``a``-lattice of ``h_I = f + g(. + a)``: once it vanishes it must stay vanished.

    (i) walks left from positive nodes, (ii) walks right. A witness is the
    pair (positive node, node where positivity reappears after a zero).
    """
    f = np.asarray(f, dtype=float)
    h_I = f + shift_field(g, steps, +1)
    n = h_I.shape[0]
    x = grid.x if grid is not None else np.arange(n, dtype=float)
    top = float(h_I.max()) if n else 0.0
    if steps == 0 or top <= 0.0:
        return LayerHypothesis(True, True, h_I)
    positive = h_I > EPS_SUPP * top
    wit_i = wit_ii = None
    for r in range(steps):
        idx = np.arange(r, n, steps)
        pos = positive[idx]
        hits = np.flatnonzero(pos)
        if hits.size < 2:
            continue
        gaps = np.flatnonzero(np.diff(hits) > 1)
        if gaps.size == 0:
            continue
        # (i): rightmost gap seen from the right; (ii): leftmost gap seen from the left
        gi = gaps[-1]
        cand_i = (float(x[idx[hits[gi + 1]]]), float(x[idx[hits[gi]]]))
        gii = gaps[0]
        cand_ii = (float(x[idx[hits[gii]]]), float(x[idx[hits[gii + 1]]]))
        if wit_i is None or cand_i[0] < wit_i[0]:
            wit_i = cand_i
        if wit_ii is None or cand_ii[0] < wit_ii[0]:
            wit_ii = cand_ii
    return LayerHypothesis(wit_i is None, wit_ii is None, h_I, wit_i, wit_ii)


def closed_form_limit(f: np.ndarray, g: np.ndarray, steps: int,
                      grid: Grid | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Long-time limit ``alpha = Phi+ - Phi+(. + a)``, ``beta = Phi- - Phi-(. - a)``."""
    hyp = check_hypothesis(f, g, steps, grid)
    if not hyp.satisfied:
        raise HypothesisError("closed-form limit hypotheses violated",
                              witness=hyp.witness_i or hyp.witness_ii)
    phi = transform_initial(f, g, steps)
    pos, neg = positive_part(phi), negative_part(phi)
    return pos - shift_field(pos, steps, +1), neg - shift_field(neg, steps, -1)


@dataclass
class LayerTrace:
    """Observables sampled along a fast-time run."""

    tau: list[float] = field(default_factory=list)
    sup_support_f: list[float] = field(default_factory=list)
    inf_support_g: list[float] = field(default_factory=list)
    mean_bid: list[float] = field(default_factory=list)
    mean_ask: list[float] = field(default_factory=list)
    mass_A: list[float] = field(default_factory=list)
    mass_B: list[float] = field(default_factory=list)
    volume: list[float] = field(default_factory=list)

    def record(self, state: LayerState, grid: Grid, steps: int) -> None:
        sf = numerical_support(state.alpha, grid)
        sg = numerical_support(state.beta, grid)
        self.tau.append(state.tau)
        self.sup_support_f.append(math.nan if sf is None else sf[1])
        self.inf_support_g.append(math.nan if sg is None else sg[0])
        self.mean_bid.append(mean_position(state.alpha, grid))
        self.mean_ask.append(mean_position(state.beta, grid))
        if steps > 0:
            self.mass_A.append(integrate(lattice_sum(state.alpha, steps, +1), grid))
            self.mass_B.append(integrate(lattice_sum(state.beta, steps, -1), grid))
        self.volume.append(integrate(state.alpha * state.beta, grid))


def run_layer(f: np.ndarray, g: np.ndarray, params: LayerParams, grid: Grid, stride: int = 1,
              observers: Iterable[Callable[[LayerState], None]] = ()) -> tuple[LayerState, LayerTrace]:
    if stride < 1:
        raise ValueError("stride must be >= 1")
    solver = LayerSolver(grid, params)
    state = LayerState(grid.check(f, "f").copy(), grid.check(g, "g").copy(), 0.0, params.epsilon)
    trace = LayerTrace()
    observers = list(observers)
    trace.record(state, grid, solver.steps)
    for obs in observers:
        obs(state)
    n_steps = params.n_steps
    for n in range(1, n_steps + 1):
        try:
            state = solver.step(state)
        except SolverError as err:
            raise err.at_step(n, partial=(state, trace)) from err
        state = LayerState(state.alpha, state.beta, n * params.dt, state.epsilon)
        if n % stride == 0 or n == n_steps:
            trace.record(state, grid, solver.steps)
            for obs in observers:
                obs(state)
    return state, trace
