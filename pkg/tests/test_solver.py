import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from clampqp.layers import build_penalty_grid, nearest_index, precompute_all
from clampqp.problem import Status, validate
from clampqp.solver import (InvalidCache, SolverSettings, fixed_iters, iterate, residuals,
                            rho_nominal, select_layer, solve, warm_start)

from .helpers import random_problem


def box_1d():
    return validate([[2.0]], [-2.0], [[1.0]], [0.0], [0.5])


def tight(eps=1e-9, **kw):
    return SolverSettings(eps_prim=eps, eps_dual=eps, **kw)


# -- single pieces ----------------------------------------------------------

def test_iterate_1d_hand_value():
    W = np.array([[-1 / 3, 2 / 3, -1 / 3], [2 / 3, -1 / 3, 2 / 3], [1, -1, 1]])
    b = np.array([2 / 3, 2 / 3, 0.0])
    lo = np.array([-np.inf, 0.0, -np.inf])
    hi = np.array([np.inf, 0.5, np.inf])
    np.testing.assert_allclose(iterate(np.zeros(3), W, b, lo, hi), [2 / 3, 0.5, 0.0], atol=1e-15)


def test_residuals_examples():
    p = box_1d()
    assert residuals(np.array([0.5]), np.array([0.5]), np.array([1.0]), p) == (0.0, 0.0)
    # G y - z = 0.25 ; H y + g + lam = 1 - 2 + 0 = -1
    assert residuals(np.array([0.5]), np.array([0.25]), np.array([0.0]), p) == (0.25, 1.0)


def test_rho_nominal_balances_residuals():
    p = validate([[1.0]], [0.0], [[1.0]], [-1.0], [1.0])
    y, z, lam = np.array([1.0]), np.array([0.0]), np.array([0.0])
    # both scales are 1, so the estimate is rho * sqrt(r_prim / r_dual)
    assert rho_nominal(4.0, 1.0, y, z, lam, p, 0.1) == pytest.approx(0.2)
    assert rho_nominal(1.0, 4.0, y, z, lam, p, 0.1) == pytest.approx(0.05)


def test_rho_nominal_holds_on_zero_residual():
    p = box_1d()
    args = (np.ones(1), np.ones(1), np.ones(1), p, 0.3)
    assert rho_nominal(0.0, 1.0, *args) == 0.3
    assert rho_nominal(1.0, 0.0, *args) == 0.3


def test_select_layer_threshold():
    grid = build_penalty_grid()
    assert select_layer(1.0, grid, 4, 5.0) == 6      # ratio 10 switches
    assert select_layer(0.3, grid, 4, 5.0) == 4      # ratio 3 holds
    assert select_layer(0.5, grid, 4, 5.0) == 5      # ratio exactly 5 switches
    assert select_layer(1e-9, grid, 4, 5.0) == 0
    assert select_layer(1e9, grid, 4, 5.0) == 12


def test_nearest_index_ties_go_low():
    assert nearest_index(np.array([1e-3, 1e3]), 1.0) == 0


def test_warm_start_from_solution():
    p = box_1d()
    rep = solve(p, precompute_all(p))
    y, Gy, lam, idx = warm_start(rep.solution, p)
    np.testing.assert_array_equal(y, rep.y)
    np.testing.assert_array_equal(Gy, p.G @ rep.y)
    assert idx == rep.final_index


def test_warm_start_rejects_wrong_shape():
    p = box_1d()
    rep = solve(p, precompute_all(p))
    other = validate(np.eye(2), [0, 0], np.eye(2), [-1, -1], [1, 1])
    with pytest.raises(ValueError):
        warm_start(rep.solution, other)


def test_settings_validation():
    with pytest.raises(ValueError):
        SolverSettings(check_interval=0)
    with pytest.raises(ValueError):
        SolverSettings(eps_prim=0.0)
    with pytest.raises(ValueError):
        SolverSettings(max_iters=10, check_interval=25)


# -- solve examples ------------------------------------------------------------

def test_solve_active_upper_bound():
    p = box_1d()
    rep = solve(p, precompute_all(p), tight())
    assert rep.status is Status.SOLVED
    assert rep.y[0] == pytest.approx(0.5, abs=1e-6)
    assert rep.lam[0] == pytest.approx(1.0, abs=1e-6)


def test_solve_equality():
    p = validate([[1.0]], [0.0], [[1.0]], [1.0], [1.0])
    rep = solve(p, precompute_all(p), tight())
    assert rep.status is Status.SOLVED
    assert rep.y[0] == pytest.approx(1.0, abs=1e-6)
    assert rep.lam[0] == pytest.approx(-1.0, abs=1e-6)


def test_solve_inactive_box():
    p = validate([[1.0]], [-1.0], [[1.0]], [-10.0], [10.0])
    rep = solve(p, precompute_all(p), tight())
    assert rep.y[0] == pytest.approx(1.0, abs=1e-6)
    assert rep.lam[0] == pytest.approx(0.0, abs=1e-6)


def test_solve_two_dimensional_halfspace():
    p = validate(np.eye(2), [-1.0, -1.0], [[1.0, 1.0]], [-np.inf], [1.0])
    rep = solve(p, precompute_all(p), tight())
    np.testing.assert_allclose(rep.y, [0.5, 0.5], atol=1e-6)
    assert rep.lam[0] == pytest.approx(0.5, abs=1e-6)


def test_max_iters_status():
    rng = np.random.default_rng(0)
    p = random_problem(rng, 30, 20, n_eq=5)
    rep = solve(p, precompute_all(p), tight(1e-14, max_iters=25))
    assert rep.status is Status.MAX_ITERS
    assert rep.iterations == 25


def test_cache_mismatch_raises():
    p = box_1d()
    other = validate(np.eye(2), [0, 0], np.eye(2), [-1, -1], [1, 1])
    with pytest.raises(InvalidCache):
        solve(other, precompute_all(p))


def test_cache_reused_across_cost_and_bounds(rng):
    p = random_problem(rng, 8, 6)
    cache = precompute_all(p)
    q = p.replace(g=rng.standard_normal(8), c=p.c - 0.5, d=p.d + 0.5)
    rep = solve(q, cache, tight())
    assert rep.status is Status.SOLVED
    assert max(residuals(rep.y, rep.z, rep.lam, q)) <= 1e-9


def test_warm_start_converges_at_first_check(rng):
    p = random_problem(rng, 10, 8, n_eq=2)
    cache = precompute_all(p)
    rep = solve(p, cache, tight(1e-7))
    again = solve(p, cache, tight(1e-7), warm=(rep.y, rep.z, rep.lam, rep.final_index))
    assert again.iterations == SolverSettings().check_interval


def test_penalty_trace_starts_at_initial_index(rng):
    p = random_problem(rng, 10, 8)
    cache = precompute_all(p)
    rep = solve(p, cache)
    assert rep.rho_trace[0] == (0, cache.grid.initial_index)
    assert all(it % SolverSettings().check_interval == 0 for it, _ in rep.rho_trace[1:])


def test_fixed_iters_is_repeated_iterate(rng):
    p = random_problem(rng, 6, 4, n_eq=1)
    cache = precompute_all(p, scale=False)
    k0 = cache.grid.initial_index
    b = cache.bias(k0, p.g)
    v = np.zeros(cache.n + 2 * cache.m)
    for _ in range(40):
        v = iterate(v, cache.W[k0], b, cache.c_tilde, cache.d_tilde)
    rep = fixed_iters(p, cache, SolverSettings(adaptive_rho=False), 40)
    np.testing.assert_array_equal(rep.v, v)
    one = fixed_iters(p, cache, k=1)
    np.testing.assert_array_equal(one.v, iterate(np.zeros_like(v), cache.W[k0], b, cache.c_tilde, cache.d_tilde))


def test_fixed_iters_rejects_zero():
    p = box_1d()
    with pytest.raises(ValueError):
        fixed_iters(p, precompute_all(p), k=0)


def test_deterministic(rng):
    p = random_problem(rng, 20, 12, n_eq=3)
    a = solve(p, precompute_all(p))
    b = solve(p, precompute_all(p))
    np.testing.assert_array_equal(a.y, b.y)
    np.testing.assert_array_equal(a.lam, b.lam)
    assert a.iterations == b.iterations and a.rho_trace == b.rho_trace


def test_tighter_tolerance_needs_no_fewer_iterations(rng):
    p = random_problem(rng, 20, 12, n_eq=3)
    cache = precompute_all(p)
    counts = [solve(p, cache, tight(eps)).iterations for eps in (1e-3, 1e-5, 1e-7, 1e-9)]
    assert counts == sorted(counts)


@pytest.mark.parametrize("seed", range(5))
def test_scaled_and_unscaled_agree(seed):
    rng = np.random.default_rng(seed)
    p = random_problem(rng, 12, 9, n_eq=2)
    a = solve(p, precompute_all(p), tight(1e-10))
    b = solve(p, precompute_all(p, scale=False), tight(1e-10))
    assert a.status is b.status is Status.SOLVED
    assert np.abs(a.y - b.y).max() <= 1e-6


def test_fixed_point_satisfies_kkt(rng):
    p = random_problem(rng, 8, 6, n_eq=2)
    cache = precompute_all(p, scale=False)
    k = cache.grid.initial_index
    b = cache.bias(k, p.g)
    v = np.zeros(cache.n + 2 * cache.m)
    for _ in range(100_000):
        nxt = iterate(v, cache.W[k], b, cache.c_tilde, cache.d_tilde)
        done = np.abs(nxt - v).max() <= 1e-10
        v = nxt
        if done:
            break
    assert done
    n, m = p.n, p.m
    r = residuals(v[:n], v[n:n + m], v[n + m:], p)
    assert max(r) <= 1e-8 * max(1.0, np.abs(v).max())


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 12), st.integers(1, 10), st.integers(1, 60))
def test_clamp_keeps_z_feasible(seed, n, m, k):
    rng = np.random.default_rng(seed)
    p = random_problem(rng, n, m, n_eq=rng.integers(0, m + 1))
    cache = precompute_all(p)
    rep = fixed_iters(p, cache, k=k)
    z_s = rep.v[n:n + m]
    lo, hi = cache.c_tilde[n:n + m], cache.d_tilde[n:n + m]
    assert np.all(z_s >= lo) and np.all(z_s <= hi)
    # unscaling multiplies by 1/F once, so bounds hold to a couple of ulps
    slack = 1e-14 * np.maximum(1.0, np.abs(rep.z))
    assert np.all(rep.z >= p.c - slack) and np.all(rep.z <= p.d + slack)
