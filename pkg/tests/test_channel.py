from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fbl_star_noma.channel import (
    ChannelParams,
    ChannelRealization,
    GeometryError,
    SystemGeometry,
    array_response,
    compute_geometry,
    draw_channel,
    sample_rician,
)

D_SR = 40.3112887415  # sqrt(1625)
PHI_RC = -0.45163344108  # arcsin(-10 / sqrt(525))


def test_default_geometry_values():
    ang = compute_geometry(SystemGeometry())
    assert ang.phi_SR == 0.0
    assert ang.d_SR == pytest.approx(D_SR, rel=1e-11)
    assert ang.phi_Rc == pytest.approx(PHI_RC, rel=1e-10)
    for phi in (ang.phi_SR, ang.phi_Rc, ang.phi_Rs):
        assert -math.pi / 2 <= phi <= math.pi / 2
    for az in (ang.varphi_SR, ang.varphi_Rc, ang.varphi_Rs):
        assert 0.0 <= az <= math.pi
    assert compute_geometry(SystemGeometry()) == ang


def test_degenerate_geometry_rejected():
    with pytest.raises(GeometryError):
        SystemGeometry(c_R=(0.0, 0.0, 10.0))
    with pytest.raises(GeometryError, match="R-Uc"):
        compute_geometry(SystemGeometry(c_Uc=(35.0, 20.0, 0.0)))
    with pytest.raises(GeometryError):
        SystemGeometry(N_v=0)
    with pytest.raises(GeometryError):
        SystemGeometry(spacing_ratio=0.0)


def test_array_response_examples():
    assert np.array_equal(array_response(0.3, 1.1, SystemGeometry(N_v=1, N_h=1)), np.array([1.0 + 0j]))
    a = array_response(math.pi / 2, 0.0, SystemGeometry(N_v=2, N_h=1, spacing_ratio=0.5))
    assert np.allclose(a, [1.0, -1.0], atol=1e-15)


@given(st.floats(-1.5, 1.5), st.floats(0.0, math.pi))
def test_array_response_unit_modulus_and_periodic(phi, varphi):
    geo = SystemGeometry(N_v=3, N_h=4)
    a = array_response(phi, varphi, geo)
    assert a.shape == (12,)
    assert np.allclose(np.abs(a), 1.0, atol=1e-12)
    assert np.allclose(array_response(phi, varphi + 2 * math.pi, geo), a, atol=1e-9)


def test_los_only_limit_is_exact():
    geo = SystemGeometry()
    params = ChannelParams(rician_k_db=math.inf)
    chan = draw_channel(geo, params, np.random.default_rng(5))
    ang = compute_geometry(geo)
    expect = math.sqrt(params.rho * ang.d_SR ** (-params.alpha1)) * array_response(ang.phi_SR, ang.varphi_SR, geo)
    assert np.array_equal(chan.h_SR, expect)


def test_rayleigh_second_moment():
    geo = SystemGeometry(N_v=1, N_h=1)
    params = ChannelParams(rician_k_db=-math.inf)
    ang = compute_geometry(geo)
    rng = np.random.default_rng(11)
    draws = np.array([sample_rician(ang, params, geo, rng).h_SR[0] for _ in range(100_000)])
    target = params.rho * ang.d_SR ** (-params.alpha1)
    assert np.mean(np.abs(draws) ** 2) == pytest.approx(target, rel=0.02)


@pytest.mark.parametrize("k_db", [-10.0, 3.0, 20.0])
def test_second_moment_any_k(k_db):
    geo = SystemGeometry(N_v=2, N_h=2)
    params = ChannelParams(rician_k_db=k_db)
    ang = compute_geometry(geo)
    rng = np.random.default_rng(3)
    n = 20_000
    p = np.array([np.abs(sample_rician(ang, params, geo, rng).h_Rc) ** 2 for _ in range(n)])
    target = params.rho * ang.d_Rc ** (-params.alpha2)
    sem = p.std(axis=0, ddof=1) / math.sqrt(n)
    assert np.all(np.abs(p.mean(axis=0) - target) <= 3 * sem + 1e-18)


def test_cascade_is_exact_product_and_seeded():
    geo = SystemGeometry()
    params = ChannelParams()
    a = draw_channel(geo, params, np.random.default_rng(42))
    b = draw_channel(geo, params, np.random.default_rng(42))
    assert np.array_equal(a.h_c, a.h_Rc * a.h_SR)
    assert np.array_equal(a.h_s, a.h_Rs * a.h_SR)
    for name in ("h_SR", "h_Rc", "h_Rs", "h_c", "h_s"):
        assert getattr(a, name).tobytes() == getattr(b, name).tobytes()
    assert a.N == 16


def test_realization_shape_check():
    with pytest.raises(ValueError):
        ChannelRealization(np.ones(3), np.ones(2), np.ones(3))


def test_channel_params_conversions():
    p = ChannelParams()
    assert p.rho == pytest.approx(1e-3)
    assert p.rician_k == pytest.approx(10 ** 0.3)
    assert p.snr_scale("c") == pytest.approx(1e11)
    with pytest.raises(ValueError):
        ChannelParams(bandwidth_hz=0.0)
