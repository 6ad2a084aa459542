import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from battdp import solver
from battdp.mdp import build_iid, build_markov_prices
from battdp.model import BatteryParams

from instances import random_instance

EXAMPLE_T = [[0.5, 0, 0.5, 0], [1, 0, 0, 0], [0, 0, 0, 1], [0, 1, 0, 0]]


def constant_price(p=10.0, d=2.0, b_max=2.0, alpha=0.9, step=0.5):
    return build_iid({p: 1.0}, {d: 1.0}, BatteryParams(b_max), alpha, battery_step=step)


def closed_form(m):
    # demand covers the whole battery, so stored energy replaces one purchase now
    p, d = m.prices[0], m.demands[0]
    return d * p / (1 - m.alpha) - m.levels * p


def test_closed_form_confirmed_by_long_recursion():
    m = constant_price()
    J = np.zeros(m.n_levels)
    lv = m.levels
    p, d, a = 10.0, 2.0, 0.9
    # plain scalar recursion, independent of the package solvers
    for _ in range(10_000):
        J = np.array([min((d + max(t - b, 0.0) - max(b - t, 0.0)) * p + a * J[k]
                          for k, t in enumerate(lv) if b - d <= t)
                      for b in lv])
    np.testing.assert_allclose(J, closed_form(m), rtol=1e-12)


@pytest.mark.parametrize("method", ["value", "policy"])
def test_solvers_match_closed_form(method):
    m = constant_price(alpha=0.97)
    sol = solver.value_iteration(m, tol=1e-9) if method == "value" else solver.policy_iteration(m)
    np.testing.assert_allclose(sol.value.values[0], closed_form(m), rtol=1e-5)


def test_constant_price_never_charges():
    m = constant_price(d=1.0, b_max=3.0)
    sol = solver.policy_iteration(m)
    # buying ahead never pays; stored energy is used as early as possible
    np.testing.assert_array_equal(sol.policy.target[0], np.maximum(m.levels - 1.0, 0.0))


def test_example_policy_is_found():
    m = build_markov_prices(EXAMPLE_T, [1, 2, 3, 4], 1.0, BatteryParams(1.0), 0.9, battery_step=1.0)
    s = solver.policy_iteration(m)
    np.testing.assert_array_equal(s.policy.target, [[1, 1], [0, 0], [1, 1], [0, 0]])
    v = solver.value_iteration(m)
    assert v.policy == s.policy


@pytest.mark.parametrize("seed", range(6))
def test_value_and_policy_iteration_agree(seed):
    rng = np.random.default_rng(100 + seed)
    m = random_instance(rng)
    tol = 1e-7
    v = solver.value_iteration(m, tol=tol)
    p = solver.policy_iteration(m)
    scale = max(1.0, float(np.abs(p.value.values).max()))
    assert np.max(np.abs(v.value.values - p.value.values)) <= tol / 2 + 1e-9 * scale


@pytest.mark.parametrize("seed", range(4))
def test_finite_horizon_oracle_converges(seed):
    rng = np.random.default_rng(200 + seed)
    m = random_instance(rng, alpha=0.8)
    p = solver.policy_iteration(m)
    prev = math.inf
    for n in (5, 20, 80):
        gap = np.max(np.abs(solver.finite_horizon_oracle(m, n).values - p.value.values))
        assert gap <= solver.oracle_gap_bound(m, n) + 1e-9
        assert gap <= prev + 1e-12
        prev = gap


def test_oracle_horizon_zero_is_zero():
    m = constant_price()
    assert np.all(solver.finite_horizon_oracle(m, 0).values == 0)
    with pytest.raises(ValueError):
        solver.finite_horizon_oracle(m, -1)


def test_krylov_evaluation_matches_direct(monkeypatch):
    rng = np.random.default_rng(11)
    m = random_instance(rng, kind="general")
    pol = solver.Policy(m.stay_index.copy(), m.levels)
    direct = solver.evaluate_policy(m, pol)
    monkeypatch.setattr(solver, "DIRECT_SOLVE_MAX", 0)
    krylov = solver.evaluate_policy(m, pol)
    np.testing.assert_allclose(krylov, direct, rtol=1e-8, atol=1e-8)


def test_nonconvergence_raises():
    m = constant_price(alpha=0.99)
    with pytest.raises(solver.NonConvergenceError) as e:
        solver.value_iteration(m, tol=1e-9, max_iters=3)
    assert e.value.residual > 0
    with pytest.raises(ValueError):
        solver.value_iteration(m, tol=0.0)


def test_policy_evaluation_is_fixed_point():
    rng = np.random.default_rng(3)
    m = random_instance(rng)
    s = solver.policy_iteration(m)
    vf, greedy = solver.bellman_backup(m, s.value)
    assert np.max(np.abs(vf.values - s.value.values)) <= 1e-9 * max(1, np.abs(vf.values).max())


@given(seed=st.integers(0, 10_000), shift=st.floats(0.0, 20.0))
def test_bellman_operator_monotone_and_contracting(seed, shift):
    rng = np.random.default_rng(seed)
    m = random_instance(rng)
    J1 = rng.uniform(0, 30, (m.n_states, m.n_levels))
    J2 = J1 + rng.uniform(0, shift, J1.shape)
    T1 = solver.bellman_backup(m, J1)[0].values
    T2 = solver.bellman_backup(m, J2)[0].values
    assert np.all(T2 >= T1 - 1e-9)
    assert np.max(np.abs(T2 - T1)) <= m.alpha * np.max(np.abs(J2 - J1)) + 1e-9


@given(seed=st.integers(0, 10_000))
def test_optimal_value_bounds(seed):
    rng = np.random.default_rng(seed)
    m = random_instance(rng)
    J = solver.policy_iteration(m).value.values
    # never negative, never worse than buying all demand from the grid
    assert J.min() >= -1e-9
    do_nothing = solver.evaluate_policy(m, solver.Policy(m.stay_index.copy(), m.levels))
    assert np.all(J <= do_nothing + 1e-9 * max(1.0, do_nothing.max()))
