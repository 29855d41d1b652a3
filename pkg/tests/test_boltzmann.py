from __future__ import annotations

import logging
import math

import numpy as np
import pytest

from boltzprice.boltzmann import (
    BoltzmannSolver,
    BoltzmannState,
    ModelParams,
    combined_density,
    mean_price_budget,
    run_boltzmann,
    step_boltzmann,
    transaction_volume,
)
from boltzprice.errors import SolverError
from boltzprice.grid import Grid, HeatStepper, integrate

from _data import bump, example1_fields


def test_params_validation():
    p = ModelParams(k=10.0, a=0.1, dt=0.01, t_end=0.5)
    assert p.n_steps == 50 and p.diffusion == pytest.approx(1.0)
    assert ModelParams(k=1.0, a=0.0, dt=0.1, sigma=1.0).diffusion == 0.5
    for bad in (dict(k=-1.0), dict(a=-0.1), dict(sigma=0.0), dict(dt=0.0), dict(t_end=-1.0),
                dict(positivity="lenient")):
        kw = dict(k=1.0, a=0.1, dt=0.01) | bad
        with pytest.raises(ValueError):
            ModelParams(**kw)


def test_constant_state_without_trading(unit_grid):
    params = ModelParams(k=0.0, a=0.02, dt=1e-3, sigma=1.0)
    state = BoltzmannState(np.full(unit_grid.n_nodes, 0.7), np.full(unit_grid.n_nodes, 0.2))
    for _ in range(20):
        state = step_boltzmann(state, params, unit_grid)
    np.testing.assert_allclose(state.f, 0.7, rtol=1e-11)
    np.testing.assert_allclose(state.g, 0.2, rtol=1e-11)


def test_zero_rate_is_pure_heat_step(unit_grid):
    f, g = example1_fields(unit_grid)
    params = ModelParams(k=0.0, a=0.02, dt=1e-3, sigma=1.0)
    heat = HeatStepper(unit_grid.n_nodes, 0.5, 1e-3, unit_grid.h)
    new = step_boltzmann(BoltzmannState(f, g), params, unit_grid)
    np.testing.assert_array_equal(new.f, heat(f))
    np.testing.assert_array_equal(new.g, heat(g))
    assert new.t == pytest.approx(1e-3) and new.leaked_f == 0.0


def test_disjoint_supports_give_pure_heat_step(unit_grid):
    x = unit_grid.x
    f, g = bump(x, 0.1, 0.3), bump(x, 0.6, 0.9)
    params = ModelParams(k=50.0, a=0.02, dt=1e-3, sigma=1.0)
    heat = HeatStepper(unit_grid.n_nodes, 0.5, 1e-3, unit_grid.h)
    new = step_boltzmann(BoltzmannState(f, g), params, unit_grid)
    np.testing.assert_array_equal(new.f, heat(f))
    np.testing.assert_array_equal(new.g, heat(g))


def test_guard_strict_raises(unit_grid):
    f, g = example1_fields(unit_grid)
    params = ModelParams(k=1e3, a=0.02, dt=1e-3, sigma=1.0)
    with pytest.raises(SolverError, match="time step too large"):
        step_boltzmann(BoltzmannState(f, g), params, unit_grid)


def test_guard_warn_continues(unit_grid, caplog):
    f, g = example1_fields(unit_grid)
    params = ModelParams(k=1e3, a=0.02, dt=1e-3, t_end=0.01, sigma=1.0, positivity="warn")
    with caplog.at_level(logging.WARNING):
        state, series, _ = run_boltzmann(BoltzmannState(f, g), params, unit_grid)
    assert "collision guard violated" in caplog.text
    assert len(series) == 10 and np.isfinite(state.f).all()


def test_positivity_lost_strict(unit_grid):
    solver = BoltzmannSolver(unit_grid, ModelParams(k=1.0, a=0.02, dt=1e-3, sigma=1.0))
    with pytest.raises(SolverError, match="positivity lost"):
        solver._positivity(np.array([1.0, -1e-6]), "f")
    np.testing.assert_array_equal(solver._positivity(np.array([1.0, -1e-14]), "f"), [1.0, 0.0])
    with pytest.raises(SolverError, match="non-finite"):
        solver._positivity(np.array([1.0, np.inf]), "f")


def test_failing_step_index_attached(unit_grid):
    f, g = example1_fields(unit_grid)
    params = ModelParams(k=1e3, a=0.02, dt=1e-3, t_end=0.1, sigma=1.0)
    with pytest.raises(SolverError) as info:
        run_boltzmann(BoltzmannState(f, g), params, unit_grid)
    assert info.value.step == 1
    before, series, records = info.value.partial
    assert len(series) == 0 and len(records) == 1 and before.t == 0.0


def test_zero_horizon_gives_empty_series(unit_grid):
    x = unit_grid.x
    f, g = bump(x, 0.2, 0.6), bump(x, 0.4, 0.8)
    state, series, records = run_boltzmann(BoltzmannState(f, g), ModelParams(k=1.0, a=0.02, dt=1e-3),
                                           unit_grid)
    assert len(series) == 0 and len(records) == 1
    np.testing.assert_array_equal(state.f, f)


def test_stride_and_final_step(unit_grid):
    x = unit_grid.x
    f, g = bump(x, 0.2, 0.6), bump(x, 0.4, 0.8)
    params = ModelParams(k=1.0, a=0.02, dt=1e-3, t_end=0.025, sigma=1.0)
    seen = []
    _, series, records = run_boltzmann(BoltzmannState(f, g), params, unit_grid,
                                       observers=[lambda s, r: seen.append(s.t)], stride=10)
    assert seen == pytest.approx([0.0, 0.01, 0.02, 0.025])
    assert series.times == pytest.approx([0.01, 0.02, 0.025])
    with pytest.raises(ValueError):
        run_boltzmann(BoltzmannState(f, g), params, unit_grid, stride=0)


def test_no_trading_carries_price(unit_grid):
    x = unit_grid.x
    f, g = bump(x, 0.1, 0.3), bump(x, 0.6, 0.9)
    params = ModelParams(k=1.0, a=0.02, dt=1e-3, t_end=0.003, sigma=1e-3)
    _, series, _ = run_boltzmann(BoltzmannState(f, g), params, unit_grid)
    assert all(series.carried) and all(math.isnan(p) for p in series.prices)


def test_transaction_volume(unit_grid):
    x = unit_grid.x
    state = BoltzmannState(bump(x, 0.2, 0.6), bump(x, 0.4, 0.8))
    np.testing.assert_array_equal(transaction_volume(state, ModelParams(k=3.0, a=0.0, dt=1.0)),
                                  3.0 * state.f * state.g)


def test_mirror_symmetry_price_at_center(unit_grid):
    x = unit_grid.x
    f, g = bump(x, 0.3, 0.6), bump(x, 0.4, 0.7)
    params = ModelParams(k=5.0, a=0.0, dt=1e-3, t_end=0.05, sigma=1.0)
    state, series, _ = run_boltzmann(BoltzmannState(f, g), params, unit_grid)
    np.testing.assert_allclose(state.f, state.g[::-1], atol=1e-13)
    assert series.prices[-1] == pytest.approx(0.5, abs=1e-12)


def test_budget_residual_and_mass_defect(unit_grid):
    x = unit_grid.x
    f, g = bump(x, 0.0, 0.55, 1.0), bump(x, 0.45, 1.0, 1.0)
    params = ModelParams(k=20.0, a=0.04, dt=1e-3, sigma=1.0)
    solver = BoltzmannSolver(unit_grid, params)
    state = BoltzmannState(f, g)
    for _ in range(50):
        old, state = state, solver.step(state)
        b = mean_price_budget(old, state, params, unit_grid)
        assert abs(b["residual_f"]) <= 1e-14 and abs(b["residual_g"]) <= 1e-14
        assert b["trade_f"] <= 0.0 <= b["trade_g"]
        # mass change equals the collision defect exactly: heat conserves trapezoid mass
        assert integrate(old.f, unit_grid) - integrate(state.f, unit_grid) == pytest.approx(
            state.leaked_f - old.leaked_f, abs=1e-14)


def test_combined_density_layout():
    f, g = np.arange(5.0), 10 * np.arange(5.0)
    np.testing.assert_array_equal(combined_density(f, g, 2), [20, 31, 42])
    np.testing.assert_array_equal(combined_density(f, g, 0), f + g)


def test_support_shrinks_with_rate():
    grid = Grid.from_spacing(0.0, 1.0, 2e-3)
    x = grid.x
    f0, g0 = bump(x, 0.1, 0.6), bump(x, 0.4, 0.9)
    widths = []
    for k in (1e2, 1e3):
        params = ModelParams(k=k, a=0.02, dt=0.25 / k, t_end=0.2, sigma=1.0)
        state, _, _ = run_boltzmann(BoltzmannState(f0, g0), params, grid)
        mu = transaction_volume(state, params)
        widths.append(float(np.ptp(x[mu > 1e-3 * mu.max()])))
    assert widths[1] < widths[0]
