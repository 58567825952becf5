import numpy as np
import pytest

from clampqp.layers import build_penalty_grid
from clampqp.oracle import (AdmmState, InfeasibleProblem, admm_step_original, admm_step_reordered,
                            brute_force_kkt)
from clampqp.problem import validate

from .helpers import random_problem


def box_1d():
    return validate([[2.0]], [-2.0], [[1.0]], [0.0], [0.5])


@pytest.mark.parametrize("seed", range(10))
def test_mu_cancels_exactly(seed):
    rng = np.random.default_rng(seed)
    p = random_problem(rng, 6, 4, n_eq=1)
    state = AdmmState(*(rng.standard_normal(k) for k in (6, 6, 4, 6, 4)))
    out = admm_step_original(state, p, 1e-6, np.full(4, 0.1))
    assert not np.any(out.mu)
    # y differs from ybar by mu / sigma, which is large here
    np.testing.assert_allclose(out.y, out.ybar + state.mu / 1e-6, rtol=1e-12)


def test_original_requires_positive_sigma():
    with pytest.raises(ValueError):
        admm_step_original(AdmmState.zeros(1, 1), box_1d(), 0.0, np.ones(1))


def test_reordered_1d_hand_value():
    y, z, lam = admm_step_reordered(np.zeros(1), np.zeros(1), np.zeros(1), box_1d(), 0.0, np.ones(1))
    np.testing.assert_allclose([y[0], z[0], lam[0]], [2 / 3, 0.5, 0.0], atol=1e-15)


def test_reordered_equality_row_pins_z():
    p = validate(np.eye(2), [1.0, -3.0], [[1.0, 2.0]], [0.7], [0.7])
    rng = np.random.default_rng(1)
    _, z, _ = admm_step_reordered(rng.standard_normal(2), rng.standard_normal(1),
                                  rng.standard_normal(1), p, 1e-6, np.array([100.0]))
    assert z[0] == 0.7


@pytest.mark.parametrize("seed", range(4))
def test_orders_trace_the_same_sequence(seed):
    # after the first original step mu = 0, and from then on the reordered
    # step maps (y_k, z_k, lam_{k-1}) to (y_{k+1}, z_{k+1}, lam_k)
    rng = np.random.default_rng(seed)
    p = random_problem(rng, 7, 5, n_eq=1)
    sigma = 1e-6
    rho = build_penalty_grid().rho_vec(4, p.equality_mask)
    s = admm_step_original(AdmmState.zeros(7, 5), p, sigma, rho)
    y, z, lam_prev = s.y, s.z, np.zeros(5)
    for _ in range(50):
        nxt = admm_step_original(s, p, sigma, rho)
        y, z, lam = admm_step_reordered(y, z, lam_prev, p, sigma, rho)
        scale = max(1.0, np.abs(nxt.lam).max())
        assert np.abs(y - nxt.y).max() <= 1e-8 * scale
        assert np.abs(z - nxt.z).max() <= 1e-8 * scale
        assert np.abs(lam - s.lam).max() <= 1e-8 * scale
        s, lam_prev = nxt, lam


def test_reordered_converges_on_1d_box():
    p = box_1d()
    y, z, lam = np.zeros(1), np.zeros(1), np.zeros(1)
    for _ in range(500):
        y, z, lam = admm_step_reordered(y, z, lam, p, 1e-6, np.ones(1))
    assert abs(y[0] - 0.5) <= 1e-6
    assert abs(lam[0] - 1.0) <= 1e-6


def test_brute_force_box():
    sol = brute_force_kkt(box_1d())
    assert sol.y[0] == pytest.approx(0.5)
    assert sol.lam[0] == pytest.approx(1.0)
    assert max(sol.r_prim, sol.r_dual) <= 1e-12


def test_brute_force_halfspace():
    p = validate(np.eye(2), [-1.0, -1.0], [[1.0, 1.0]], [-np.inf], [1.0])
    sol = brute_force_kkt(p)
    np.testing.assert_allclose(sol.y, [0.5, 0.5])
    assert sol.lam[0] == pytest.approx(0.5)


def test_brute_force_lower_bound_sign():
    p = validate([[1.0]], [1.0], [[1.0]], [0.0], [np.inf])
    sol = brute_force_kkt(p)
    assert sol.y[0] == pytest.approx(0.0)
    assert sol.lam[0] == pytest.approx(-1.0)


def test_brute_force_infeasible():
    p = validate([[1.0]], [0.0], [[1.0], [1.0]], [1.0, -np.inf], [np.inf, 0.0])
    with pytest.raises(InfeasibleProblem):
        brute_force_kkt(p)


def test_brute_force_row_limit():
    rng = np.random.default_rng(0)
    with pytest.raises(ValueError):
        brute_force_kkt(random_problem(rng, 3, 13))
