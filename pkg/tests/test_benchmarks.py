from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import channel_for, solve_cell
from fbl_star_noma.benchmarks import (
    TraceComparison,
    compare_traces,
    default_fixed_profile,
    dominates_grid,
    grid_sweep,
    iterations_to_converge,
    outer_objectives,
)
from fbl_star_noma.channel import ChannelParams
from fbl_star_noma.fbl import QosRequirements, ResourceAllocation, evaluate_performance

QOS = QosRequirements()
PARAMS = ChannelParams()


@pytest.fixture(scope="module")
def grid():
    chan = channel_for(16, 0)
    prof = default_fixed_profile(16, np.random.default_rng(0))
    m = np.linspace(200, 1000, 17)
    a = np.linspace(0.51, 0.99, 13)
    return chan, prof, grid_sweep(chan, prof, m, a, QOS, PARAMS)


def test_grid_shape_and_nodes(grid):
    chan, prof, res = grid
    assert res.shape == (17, 13)
    t = res.tuples[4, 5]
    ref = evaluate_performance(prof, chan, ResourceAllocation(res.a_c_values[5], 1 - res.a_c_values[5], res.m_values[4]), QOS, PARAMS)
    assert t.eps_cc == pytest.approx(ref.eps_cc, rel=1e-12)
    assert t.delta_sc == pytest.approx(ref.delta_sc, rel=1e-12)


def test_grid_delay_column():
    chan = channel_for(16, 0)
    res = grid_sweep(chan, default_fixed_profile(16, np.random.default_rng(0)), [700.0], [0.7], QOS, PARAMS)
    assert res.t_s[0, 0] == 700.0 / 1.4e6
    assert res.t_s[0, 0] * 1e3 == pytest.approx(0.5, rel=1e-15)


def test_grid_monotone_columns(grid):
    _, _, res = grid
    slack = 1e-12
    assert np.all(np.diff(res.eps_cc, axis=0) <= slack)
    assert np.all(np.diff(res.eps_ss, axis=0) <= slack)
    assert np.all(np.diff(res.delta_sc, axis=0) >= -slack)
    assert np.all(np.diff(res.t_s, axis=0) > 0)


def test_grid_validation_and_determinism(grid):
    chan, prof, res = grid
    with pytest.raises(ValueError):
        grid_sweep(chan, prof, [500.0], [0.5], QOS, PARAMS)
    with pytest.raises(ValueError):
        grid_sweep(chan, prof, [100.0], [0.7], QOS, PARAMS)
    with pytest.raises(ValueError):
        grid_sweep(chan, prof, [], [0.7], QOS, PARAMS)
    again = grid_sweep(chan, prof, res.m_values, res.a_c_values, QOS, PARAMS)
    for name in ("eps_cc", "eps_ss", "delta_sc", "t_s"):
        assert getattr(again, name).tobytes() == getattr(res, name).tobytes()


def test_default_profile_energy_split():
    prof = default_fixed_profile(9, np.random.default_rng(1))
    assert np.allclose(np.abs(prof.v_c) ** 2 + np.abs(prof.v_s) ** 2, 1.0)


def _recount(series, tol):
    """Walk backwards while the value stays within tol of the last one."""
    k = len(series) - 1
    while k > 0 and abs(series[k - 1] - series[-1]) <= tol:
        k -= 1
    return k


@given(st.lists(st.floats(-5, 5), min_size=1, max_size=30), st.floats(1e-6, 1.0))
def test_iterations_to_converge_matches_recount(series, tol):
    assert iterations_to_converge(series, tol) == _recount(series, tol)


def test_iterations_to_converge_empty():
    with pytest.raises(ValueError):
        iterations_to_converge([], 1e-4)


@pytest.fixture(scope="module")
def both():
    a = solve_cell(16, 1e-3, 1, "ao")
    b = solve_cell(16, 1e-3, 1, "bcd")
    assert a is not None and b is not None
    return a, b


def test_bcd_contract(both):
    _, b = both
    assert b.method == "bcd"
    assert b.performance.meets(QOS, tol=1e-9)
    assert b.point.alloc.m == math.floor(b.point.alloc.m)
    s = outer_objectives(b)
    assert all(y <= x * (1 + 1e-9) for x, y in zip(s, s[1:]))


def test_compare_traces_identity_and_round_trip(both):
    a, b = both
    same = compare_traces(a, a)
    assert all(g == 0.0 for g in same.gap)
    cmp = compare_traces(a, b, tol=1e-4)
    assert cmp.iters_a == _recount(cmp.series_a, 1e-4)
    assert cmp.iters_b == _recount(cmp.series_b, 1e-4)
    assert len(cmp.gap) == max(len(cmp.series_a), len(cmp.series_b))
    back = TraceComparison.from_json(cmp.to_json())
    assert back == cmp
    omega_cmp = compare_traces(a, b, key="objective")
    assert omega_cmp.series_a == [r.objective for r in a.outer_series()]


def test_optimizers_dominate_grid_at_own_beams(both):
    chan = channel_for(16, 1)
    m = np.arange(200.0, 1001.0, 20.0)
    a_c = np.linspace(0.51, 0.99, 49)
    for sol in both:
        assert dominates_grid(sol, chan, QOS, PARAMS, m, a_c)
