import numpy as np
import pytest
from hypothesis import given, strategies as st

from battdp.ingest import fit_hourly, synth_demand, synth_prices
from battdp.mdp import (HOURS, MdpError, TransitionKernel, build_hourly, build_iid,
                        build_markov_prices, level_grid, round_to_step)
from battdp.model import BatteryParams, ExogenousState, control_set

from instances import random_instance


def test_round_to_step_half_up():
    assert round_to_step(7.3, 5.0) == 5.0
    assert round_to_step(7.5, 5.0) == 10.0
    assert round_to_step(0.25, 0.5) == 0.5
    np.testing.assert_array_equal(round_to_step([0.1, 0.74, 0.76], 0.5), [0.0, 0.5, 1.0])


@given(st.floats(0, 1000), st.sampled_from([0.25, 0.5, 1.0, 5.0]))
def test_round_to_step_idempotent(v, step):
    r = round_to_step(v, step)
    assert round_to_step(r, step) == r
    assert abs(r - v) <= step / 2 + 1e-9


def test_level_grid():
    np.testing.assert_allclose(level_grid(2.0, 0.5), [0, 0.5, 1, 1.5, 2])
    with pytest.raises(MdpError):
        level_grid(1.0, 0.3)


def test_kernel_validation():
    with pytest.raises(MdpError):
        TransitionKernel.from_dense([[0.5, 0.4], [0, 1]])
    with pytest.raises(MdpError):
        TransitionKernel.from_dense([[1.5, -0.5], [0, 1]])
    k = TransitionKernel.from_dense([[0.5, 0.5], [0, 1]])
    np.testing.assert_allclose(k.row(0), [0.5, 0.5])
    assert k.n == 2


def test_alpha_must_be_below_one():
    with pytest.raises(MdpError):
        build_iid({1.0: 1.0}, {1.0: 1.0}, BatteryParams(1.0), 1.0)


def test_iid_builder():
    m = build_iid({1.0: 0.25, 3.0: 0.75}, {0.5: 0.5, 1.0: 0.5}, BatteryParams(2.0), 0.9)
    assert m.n_states == 4 and m.n_levels == 5
    P = m.kernel.dense()
    np.testing.assert_allclose(P.sum(axis=1), 1.0)
    # every row is the same product distribution
    np.testing.assert_allclose(P[0], [0.125, 0.125, 0.375, 0.375])
    np.testing.assert_allclose(P, np.tile(P[0], (4, 1)))
    assert m.state_index(3.0, 0.5) == 2


def test_iid_builder_rejects_bad_distribution():
    with pytest.raises(MdpError):
        build_iid({1.0: 0.5}, {1.0: 1.0}, BatteryParams(1.0), 0.9)
    with pytest.raises(MdpError):
        build_iid({}, {1.0: 1.0}, BatteryParams(1.0), 0.9)


def test_markov_builder_example():
    T = [[0.5, 0, 0.5, 0], [1, 0, 0, 0], [0, 0, 0, 1], [0, 1, 0, 0]]
    m = build_markov_prices(T, [1, 2, 3, 4], 1.0, BatteryParams(1.0), 0.9, battery_step=1.0)
    np.testing.assert_allclose(m.kernel.dense(), T)
    assert m.kind == "markov_prices"
    with pytest.raises(MdpError):
        build_markov_prices([[1.0]], [1, 2], 1.0, BatteryParams(1.0), 0.9)


def test_markov_builder_with_demand_per_price():
    T = [[0.2, 0.8], [1.0, 0.0]]
    dem = {1.0: {1.0: 0.5, 2.0: 0.5}, 5.0: {1.0: 1.0}}
    m = build_markov_prices(T, [1.0, 5.0], dem, BatteryParams(2.0), 0.9)
    P = m.kernel.dense()
    assert m.n_states == 3
    np.testing.assert_allclose(P[0], [0.1, 0.1, 0.8])
    np.testing.assert_allclose(P[2], [0.5, 0.5, 0.0])


def test_hourly_builder_cycles_through_hours():
    price = synth_prices(seed=3, days=10).discretized(5.0)
    demand = synth_demand(2, days=10, seed=4).discretized(0.5)
    emp = fit_hourly(price, demand)
    m = build_hourly(emp, BatteryParams(4.0), 0.95)
    P = m.kernel.dense()
    np.testing.assert_allclose(P.sum(axis=1), 1.0)
    modes = m.modes
    for x in range(m.n_states):
        succ = np.flatnonzero(P[x])
        assert set(modes[succ]) == {(modes[x] + 1) % HOURS}
    # the row is the next hour's empirical distribution
    x = int(np.flatnonzero(modes == 23)[0])
    dist = {(m.states[y].price, m.states[y].demand): P[x, y] for y in np.flatnonzero(P[x])}
    assert dist == pytest.approx(emp.hours[0])


def test_hourly_builder_needs_24_hours():
    with pytest.raises(MdpError):
        build_hourly([{(1.0, 1.0): 1.0}] * 23, BatteryParams(1.0), 0.9)
    with pytest.raises(MdpError):
        build_hourly([{(1.0, 1.0): 1.0}] * 23 + [{}], BatteryParams(1.0), 0.9)


def test_control_bounds_match_scalar_control_set():
    rng = np.random.default_rng(7)
    for _ in range(20):
        m = random_instance(rng, rates=bool(rng.random() < 0.5))
        lo, hi = m.control_bounds
        for x, s in enumerate(m.states):
            for i, b in enumerate(m.levels):
                u_lo, u_hi = control_set(m.params, s, float(b))
                feas = [k for k, beta in enumerate(m.levels)
                        if u_lo - 1e-9 <= beta <= u_hi + 1e-9]
                assert feas == list(range(lo[x, i], hi[x, i] + 1))


def test_stay_index_is_current_level():
    m = build_iid({1.0: 1.0}, {1.0: 1.0}, BatteryParams(3.0), 0.9)
    np.testing.assert_array_equal(m.stay_index[0], np.arange(m.n_levels))


def test_current_level_always_feasible():
    p = BatteryParams(1.0, rate_charge=lambda b: 0.2, rate_discharge=lambda b: 0.2)
    m = build_iid({1.0: 1.0}, {0.3: 1.0}, p, 0.9, battery_step=0.5)
    # the current level itself is always feasible
    lo, hi = m.control_bounds
    assert np.all(lo <= np.arange(m.n_levels)) and np.all(hi >= np.arange(m.n_levels))
    assert ExogenousState(0.3, 1.0) in m.states
