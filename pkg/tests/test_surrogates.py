from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fbl_star_noma.fbl import capacity, dispersion
from fbl_star_noma.optimizer import rate_gap, surrogate_gain, surrogate_objective
from fbl_star_noma.optimizer.surrogates import surrogate_slopes


def _cvec(rng, n):
    return rng.standard_normal(n) + 1j * rng.standard_normal(n)


def test_gain_minorant_and_tightness():
    rng = np.random.default_rng(0)
    for _ in range(2000):
        n = int(rng.integers(1, 20))
        h, v, v0 = _cvec(rng, n), _cvec(rng, n), _cvec(rng, n)
        true = abs(np.vdot(v, h)) ** 2
        assert surrogate_gain(v, v0, h) <= true * (1 + 1e-12) + 1e-12
        assert surrogate_gain(v0, v0, h) == pytest.approx(abs(np.vdot(v0, h)) ** 2, rel=1e-14)


def test_gain_zero_channel_and_length_check():
    v = np.ones(3, dtype=complex)
    assert surrogate_gain(v, 2 * v, np.zeros(3, dtype=complex)) == 0.0
    with pytest.raises(ValueError):
        surrogate_gain(v, v, np.ones(4, dtype=complex))


@given(st.integers(1, 10), st.integers(0, 2**32 - 1))
def test_gain_affine_in_real_coordinates(n, seed):
    rng = np.random.default_rng(seed)
    h, v0, v1, v2 = (_cvec(rng, n) for _ in range(4))
    t = rng.uniform(-2, 2)
    mid = surrogate_gain(v1 + t * (v2 - v1), v0, h)
    lin = surrogate_gain(v1, v0, h) + t * (surrogate_gain(v2, v0, h) - surrogate_gain(v1, v0, h))
    assert mid == pytest.approx(lin, rel=1e-9, abs=1e-9)


def test_objective_majorant_and_tightness():
    rng = np.random.default_rng(1)
    d = 100
    for _ in range(2000):
        a0, a = rng.uniform(0.5, 50.0, 2)
        m0, m = rng.uniform(200.0, 1000.0, 2)
        assert surrogate_objective(a, m, a0, m0, d) >= rate_gap(a, m, d) - 1e-10 * max(1.0, abs(rate_gap(a, m, d)))
        assert surrogate_objective(a0, m0, a0, m0, d) == rate_gap(a0, m0, d)


@settings(max_examples=50)
@given(st.floats(0.5, 50.0), st.floats(200.0, 1000.0), st.sampled_from([50, 100, 200]))
def test_m_slope_formula_matches_finite_difference(a0, m0, d):
    _, d_m = surrogate_slopes(a0, m0, d)
    expected = 0.5 * (m0 * dispersion(a0)) ** -0.5 * (capacity(a0) + d / m0)
    assert d_m == pytest.approx(float(expected), rel=1e-14)
    h = 1e-3 * m0
    fd = (rate_gap(a0, m0 + h, d) - rate_gap(a0, m0 - h, d)) / (2 * h)
    assert d_m == pytest.approx(fd, rel=1e-6)


def test_alpha_slope_matches_finite_difference():
    for a0 in (0.6, 3.0, 30.0):
        d_a, _ = surrogate_slopes(a0, 500.0, 100)
        h = 1e-6 * a0
        fd = (rate_gap(a0 + h, 500.0, 100) - rate_gap(a0 - h, 500.0, 100)) / (2 * h)
        assert d_a == pytest.approx(fd, rel=1e-6)


def test_objective_rejects_bad_anchor():
    with pytest.raises(ValueError):
        surrogate_objective(1.0, 300.0, 0.0, 300.0, 100)
