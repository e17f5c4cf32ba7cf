"""Curvature certificates for the blocklength-rate function and the composite
SIC error, used as runtime guards by the optimizer and as test oracles.

The concavity certificate for omega(alpha, m) is a quadratic condition in the
coding rate r = d/m whose coefficients depend on alpha only:

    delta_a r^2 + delta_b r + delta_c >= 0,  i.e.  r >= larger root.

``delta_a`` matches the published expression; ``delta_b`` and ``delta_c`` are
the exact coefficients of the scaled Hessian determinant (the printed forms
swap 3t+8 / 6t+8 and drop a factor C in the last term).  ``literal=True``
selects the printed forms for comparison.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from numpy.typing import ArrayLike

from .fbl import LN2, omega, q_function

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Lemma3Coefficients:
    t: float
    delta_a: float
    delta_b: float
    delta_c: float
    discriminant: float
    threshold: float  # NaN when the discriminant is negative

    @property
    def real_threshold(self) -> bool:
        return self.discriminant >= 0.0


@dataclass(frozen=True)
class Lemma3Result:
    holds: bool | None  # None: indeterminate (negative discriminant)
    rate: float
    coefficients: Lemma3Coefficients

    def __bool__(self) -> bool:
        return bool(self.holds)


def lemma3_coefficients(alpha: float, literal: bool = False) -> Lemma3Coefficients:
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    t = alpha * alpha + 2.0 * alpha
    C = math.log1p(alpha) / LN2
    CL = C * LN2
    delta_a = (8.0 + 9.0 * t) / (4.0 * t * t)
    if literal:
        delta_b = (t * (6.0 * t + 8.0) - (3.0 * t + 8.0) * CL) / (4.0 * t * t * LN2)
        delta_c = (t * CL * (4.0 - 3.0 * LN2) + t * t * (CL - 1.0) - 4.0 * CL * CL) / (4.0 * t * t * LN2**2)
    else:
        delta_b = (t * (3.0 * t + 8.0) - (6.0 * t + 8.0) * CL) / (4.0 * t * t * LN2)
        delta_c = (t * CL * (4.0 - 3.0 * CL) + t * t * (CL - 1.0) - 4.0 * CL * CL) / (4.0 * t * t * LN2**2)
    disc = delta_b * delta_b - 4.0 * delta_a * delta_c
    threshold = (-delta_b + math.sqrt(disc)) / (2.0 * delta_a) if disc >= 0.0 else math.nan
    return Lemma3Coefficients(t, delta_a, delta_b, delta_c, disc, threshold)


def lemma3_holds(alpha: float, m: float, d: float, literal: bool = False) -> Lemma3Result:
    """Certify joint concavity of omega in (alpha, m) at one point.

    The condition variable is the coding rate d/m.  A negative discriminant
    yields ``holds=None`` (never a silent pass).
    """
    coeffs = lemma3_coefficients(alpha, literal)
    rate = d / m
    if not coeffs.real_threshold:
        log.debug("lemma3: negative discriminant at alpha=%g", alpha)
        return Lemma3Result(None, rate, coeffs)
    return Lemma3Result(rate >= coeffs.threshold, rate, coeffs)


def lemma4_det(omega_cs: float, omega_ss: float) -> float:
    """Determinant of the Hessian of Q(w1) + (1 - Q(w1)) Q(w2) in (w1, w2)."""
    e = math.exp(-0.5 * (omega_cs**2 + omega_ss**2))
    return (
        e / (2.0 * math.pi) * (1.0 - q_function(omega_cs)) * (1.0 - q_function(omega_ss)) * omega_cs * omega_ss
        - e * e / (4.0 * math.pi**2)
    )


def lemma4_lower_bound(omega_cs: float, omega_ss: float, eps_cap: float = 0.3) -> float:
    """Lower bound on :func:`lemma4_det` valid when both arguments exceed
    Q^{-1}(eps_cap) and the composite error is at most ``eps_cap``.

    The bracketed factor is bounded below by its value at the regime corner;
    the Gaussian prefactor is kept at the actual arguments.
    """
    from .fbl import q_inverse

    w = q_inverse(eps_cap)
    pref = math.exp(-0.5 * (omega_cs**2 + omega_ss**2)) / (2.0 * math.pi)
    return pref * ((1.0 - eps_cap) * w * w - math.exp(-(w**2)) / (2.0 * math.pi))


def central_hessian(f: Callable[[np.ndarray], float], point: ArrayLike, step: ArrayLike) -> np.ndarray:
    x = np.asarray(point, dtype=float)
    k = x.size
    h = np.broadcast_to(np.asarray(step, dtype=float), (k,))
    H = np.empty((k, k))
    f0 = f(x)
    if not np.isfinite(f0):
        raise FloatingPointError(f"non-finite function value at {x}")
    for i in range(k):
        ei = np.zeros(k)
        ei[i] = h[i]
        fp, fm = f(x + ei), f(x - ei)
        H[i, i] = (fp - 2.0 * f0 + fm) / h[i] ** 2
        for j in range(i + 1, k):
            ej = np.zeros(k)
            ej[j] = h[j]
            H[i, j] = H[j, i] = (f(x + ei + ej) - f(x + ei - ej) - f(x - ei + ej) + f(x - ei - ej)) / (4.0 * h[i] * h[j])
    if not np.all(np.isfinite(H)):
        raise FloatingPointError(f"non-finite Hessian entries at {x}")
    return H


def numeric_psd_check(f: Callable[[np.ndarray], float], point: ArrayLike, step: ArrayLike) -> bool:
    """Central-difference Hessian of ``f`` is PSD up to -1e-6 * ||H||."""
    H = central_hessian(f, point, step)
    eig = np.linalg.eigvalsh(0.5 * (H + H.T))
    return bool(eig[0] >= -1e-6 * np.linalg.norm(H, 2))


def omega_concave_numerically(alpha: float, m: float, d: float, rel_step: float = 1e-4) -> bool:
    """Finite-difference check that -omega is convex near (alpha, m)."""
    return numeric_psd_check(lambda z: -omega(z[0], z[1], d), [alpha, m], [rel_step * alpha, rel_step * m])
