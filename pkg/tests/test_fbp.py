from __future__ import annotations

import logging
import math

import numpy as np
import pytest

from boltzprice.boltzmann import ModelParams
from boltzprice.errors import SolverError
from boltzprice.fbp import (
    FBPSolver,
    check_well_prepared,
    compatibility_slopes,
    extract_price,
    find_crossings,
    lattice_sum,
    reconstruct_densities,
    run_fbp,
    shifted_neumann_matrix,
    transform_initial,
)
from boltzprice.grid import integrate, shift_steps

from _data import bump, example1_fields


def naive_lattice_sum(u, s, direction):
    n = len(u)
    out = np.zeros(n)
    for j in range(n):
        i = j
        while 0 <= i < n:
            out[j] += u[i]
            i += direction * s
    return out


@pytest.mark.parametrize("s", [1, 3, 7, 50])
@pytest.mark.parametrize("direction", [+1, -1])
def test_lattice_sum_matches_loop(s, direction):
    u = np.random.default_rng(s).uniform(size=101)
    np.testing.assert_allclose(lattice_sum(u, s, direction), naive_lattice_sum(u, s, direction), rtol=1e-13)


def test_transform_errors_and_zeros(unit_grid):
    z = np.zeros(unit_grid.n_nodes)
    np.testing.assert_array_equal(transform_initial(z, z, 10), z)
    with pytest.raises(ValueError, match="zero transaction cost"):
        transform_initial(z, z, 0)
    with pytest.raises(ValueError):
        transform_initial(z, z[:-1], 10)


def test_example1_transform_sign_and_price(unit_grid):
    f, g = example1_fields(unit_grid)
    s = shift_steps(0.02, unit_grid)
    phi = transform_initial(f, g, s)
    x = unit_grid.x
    assert (phi[x < 0.599] > 0).all() and (phi[x > 0.601] < 0).all()
    price, flux = extract_price(phi, unit_grid)
    assert price == pytest.approx(0.6, abs=1e-12)
    # near the root Phi = f - g, whose slope is -20; only one side of each term counts
    assert flux > 0


@pytest.mark.parametrize("s", [1, 10, 37])
def test_round_trip_well_prepared(unit_grid, s):
    f, g = example1_fields(unit_grid)
    fr, gr = reconstruct_densities(transform_initial(f, g, s), s)
    np.testing.assert_allclose(fr, f, atol=1e-13)
    np.testing.assert_allclose(gr, g, atol=1e-13)


def test_extract_price_linear(unit_grid):
    price, flux = extract_price(0.5 - unit_grid.x, unit_grid)
    assert price == pytest.approx(0.5, abs=1e-14) and flux == pytest.approx(1.0)
    price, _ = extract_price(0.3001 - unit_grid.x, unit_grid)
    assert price == pytest.approx(0.3001, abs=1e-12)


def test_extract_price_zero_run_midpoint(unit_grid):
    x = unit_grid.x
    V = np.where(x < 0.4, 0.4 - x, np.where(x > 0.5, 0.5 - x, 0.0))
    price, _ = extract_price(V, unit_grid)
    assert price == pytest.approx(0.45, abs=1e-12)


def test_extract_price_no_root(unit_grid):
    with pytest.raises(SolverError, match="no root"):
        extract_price(np.ones(unit_grid.n_nodes), unit_grid)


def test_extract_price_prefers_falling_and_warns(unit_grid, caplog):
    x = unit_grid.x
    V = np.cos(3 * np.pi * x)  # crossings at 1/6 (falling), 1/2 (rising), 5/6 (falling)
    crossings = find_crossings(V, unit_grid)
    assert [c.falling for c in crossings] == [True, False, True]
    with caplog.at_level(logging.WARNING):
        price, flux = extract_price(V, unit_grid)
    assert price == pytest.approx(1 / 6, abs=1e-5) and flux > 0
    assert "3 crossings" in caplog.text
    price, _ = extract_price(-np.sin(np.pi * (x - 0.3)) * (x < 0.9) - (x >= 0.9), unit_grid)
    assert price == pytest.approx(0.3, abs=1e-5)


def test_rising_only_crossing_is_used(unit_grid):
    price, flux = extract_price(unit_grid.x - 0.7, unit_grid)
    assert price == pytest.approx(0.7) and flux == pytest.approx(-1.0)


def test_shifted_neumann_matrix_matches_ghost_assembly():
    n, s, r = 25, 4, 0.8
    A = np.zeros((n, n))
    last = n - 1
    for i in range(n):
        A[i, i] += 1 + 2 * r
        for j in (i - 1, i + 1):
            if j == -1:  # V[-1] = V[1] - V[s+1] + V[s-1]
                A[i, 1] -= r
                A[i, s + 1] += r
                A[i, s - 1] -= r
            elif j == n:  # V[N+1] = V[N-1] - V[N-s-1] + V[N-s+1]
                A[i, last - 1] -= r
                A[i, last - s - 1] += r
                A[i, last - s + 1] -= r
            else:
                A[i, j] -= r
    M = shifted_neumann_matrix(n, s, r)
    np.testing.assert_allclose(M.dense(), A, atol=1e-15)
    b = np.random.default_rng(0).normal(size=n)
    np.testing.assert_allclose(A @ M.solve(b), b, atol=1e-12)
    with pytest.raises(ValueError):
        shifted_neumann_matrix(n, 0, r)


def test_well_prepared_check(unit_grid):
    f, g = example1_fields(unit_grid)
    assert check_well_prepared(f, g, unit_grid).satisfied
    x = unit_grid.x
    assert not check_well_prepared(bump(x, 0.1, 0.6), bump(x, 0.5, 0.9), unit_grid).satisfied


def test_compatibility_slopes(unit_grid):
    f, g = example1_fields(unit_grid)
    bid, ask = compatibility_slopes(f, g, unit_grid, 0.6)
    assert bid == pytest.approx(10.0) and ask == pytest.approx(10.0)


def test_compatibility_mismatch_logged(unit_grid, caplog):
    f, g = example1_fields(unit_grid)
    with caplog.at_level(logging.WARNING):
        FBPSolver(unit_grid, ModelParams(k=0.0, a=0.02, dt=1e-4, sigma=1.0)).initial_state(f, 2 * g)
    assert "compatibility mismatch" in caplog.text


def test_zero_cost_rejected(unit_grid):
    with pytest.raises(ValueError, match="zero transaction cost"):
        FBPSolver(unit_grid, ModelParams(k=0.0, a=0.0, dt=1e-4))


@pytest.fixture(scope="module")
def example1_run(request):
    from boltzprice.grid import Grid
    grid = Grid(0.0, 1.0, 500)
    f, g = example1_fields(grid)
    params = ModelParams(k=0.0, a=0.02, dt=1e-4, t_end=0.2, sigma=1.0)
    state, series, records = run_fbp(f, g, params, grid)
    return grid, f, g, params, state, series, records


def test_fbp_mass_conserved(example1_run):
    grid, f, g, _, _, _, records = example1_run
    m0 = integrate(f, grid) + integrate(g, grid)
    assert max(abs(r.mass_f + r.mass_g - m0) for r in records) <= 1e-8


def test_fbp_flux_nonnegative_and_price_continuous(example1_run):
    _, _, _, params, _, series, records = example1_run
    assert min(r.total_volume for r in records) >= 0.0
    p = np.array(series.prices)
    assert series.times[0] == 0.0 and p[0] == pytest.approx(0.6)
    assert np.abs(np.diff(p)).max() <= 5 * math.sqrt(params.dt)


def test_fbp_densities_stay_separated(example1_run):
    grid, _, _, _, state, _, _ = example1_run
    fr, gr = reconstruct_densities(state.V, 10)
    assert (fr >= 0).all() and (gr >= 0).all()
    assert (fr * gr).max() == 0.0
    x = grid.x
    assert (fr[x > state.price + grid.h] == 0).all() and (gr[x < state.price - grid.h] == 0).all()


def test_buyer_density_follows_heat_flow_before_trading(unit_grid):
    """While the supports have not met, the reconstructed buyers diffuse like a Neumann heat flow."""
    from boltzprice.grid import HeatStepper
    x = unit_grid.x
    f, g = bump(x, 0.1, 0.3), bump(x, 0.7, 0.9)
    params = ModelParams(k=0.0, a=0.02, dt=1e-4, t_end=1e-3, sigma=1.0)
    state, _, records = run_fbp(f, g, params, unit_grid)
    heat = HeatStepper(unit_grid.n_nodes, params.diffusion, params.dt, unit_grid.h)
    u = f.copy()
    for _ in range(params.n_steps):
        u = heat(u)
    fr, _ = reconstruct_densities(state.V, 10)
    np.testing.assert_allclose(fr, u, atol=1e-7)
    assert state.price == pytest.approx(0.5, abs=0.01)
