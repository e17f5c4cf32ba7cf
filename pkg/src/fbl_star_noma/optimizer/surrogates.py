"""Tight affine bounds used by the MM inner loop."""
from __future__ import annotations

import math

import numpy as np
from numpy.typing import NDArray

from ..fbl import LN2, capacity, dispersion, omega


def surrogate_gain(v: NDArray[np.complex128], v_anchor: NDArray[np.complex128], h: NDArray[np.complex128]) -> float:
    """Affine minorant of |v^H h|^2, tight at ``v_anchor``."""
    v = np.asarray(v)
    v_anchor = np.asarray(v_anchor)
    h = np.asarray(h)
    if not (v.shape == v_anchor.shape == h.shape):
        raise ValueError("surrogate_gain: vectors must have equal length")
    a = np.vdot(v_anchor, h)  # v0^H h
    b = np.vdot(v, h)  # v^H h
    return float(2.0 * (a * np.conj(b)).real - abs(a) ** 2)


def rate_gap(alpha: float, m: float, d: float) -> float:
    """g(alpha, m) = sqrt(m / V(alpha)) (C(alpha) - d/m), i.e. omega / ln 2."""
    return float(omega(alpha, m, d)) / LN2


def surrogate_slopes(alpha_anchor: float, m_anchor: float, d: float) -> tuple[float, float]:
    """Partial derivatives of g at the anchor: (d/d alpha, d/d m)."""
    a, m = alpha_anchor, m_anchor
    C = float(capacity(a))
    V = float(dispersion(a))
    root = math.sqrt(m / V)
    d_m = 0.5 * (m * V) ** -0.5 * (C + d / m)
    d_alpha = root / (1.0 + a) * ((d / m - C) / (a * a + 2.0 * a) + 1.0 / LN2)
    return d_alpha, d_m


def surrogate_objective(alpha_sc: float, m: float, alpha_anchor: float, m_anchor: float, d: float) -> float:
    """First-order expansion of g around the anchor; an upper bound where g is concave."""
    if alpha_anchor <= 0 or m_anchor <= 0:
        raise ValueError("anchor must be strictly positive")
    d_alpha, d_m = surrogate_slopes(alpha_anchor, m_anchor, d)
    return rate_gap(alpha_anchor, m_anchor, d) + d_m * (m - m_anchor) + d_alpha * (alpha_sc - alpha_anchor)
