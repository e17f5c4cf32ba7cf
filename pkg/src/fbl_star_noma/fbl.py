"""Finite-blocklength performance model: Q function, normal-approximation block
error, two-stage SIC error chain, leakage probability and delay.

All error-probability routines accept scalars or numpy arrays.  Blocklength is
real-valued here; integrality is the optimizer's business.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.special import erfc, ndtri

from .channel import ChannelParams, ChannelRealization

LN2 = math.log(2.0)
# Beyond this the double-precision Gaussian tail underflows; saturate to 0/1.
Q_SATURATION = 38.0
ENERGY_TOL = 1e-9


def q_function(x: ArrayLike) -> float | NDArray[np.float64]:
    """Gaussian tail probability Q(x) = P(Z > x)."""
    x = np.asarray(x, dtype=float)
    out = 0.5 * erfc(x / math.sqrt(2.0))
    out = np.where(x > Q_SATURATION, 0.0, np.where(x < -Q_SATURATION, 1.0, out))
    return float(out) if out.ndim == 0 else out


def q_inverse(p: ArrayLike) -> float | NDArray[np.float64]:
    """Inverse of :func:`q_function` on (0, 1), Newton-polished."""
    p = np.asarray(p, dtype=float)
    if np.any(~((p > 0.0) & (p < 1.0))):
        raise ValueError("q_inverse is defined on the open interval (0, 1)")
    x = -ndtri(p)
    for _ in range(2):
        pdf = np.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)
        x = x + (q_function(x) - p) / pdf
    return float(x) if x.ndim == 0 else x


def capacity(gamma: ArrayLike) -> NDArray[np.float64]:
    return np.log1p(np.asarray(gamma, dtype=float)) / LN2


def dispersion(gamma: ArrayLike) -> NDArray[np.float64]:
    g = np.asarray(gamma, dtype=float)
    # 1 - (1+g)^-2 without cancellation for small g
    return g * (2.0 + g) / (1.0 + g) ** 2


def omega(alpha: ArrayLike, m: ArrayLike, d: ArrayLike) -> float | NDArray[np.float64]:
    """Q-function argument sqrt(m / V(alpha)) (C(alpha) - d/m) ln 2."""
    alpha = np.asarray(alpha, dtype=float)
    m = np.asarray(m, dtype=float)
    if np.any(alpha <= 0.0):
        raise ValueError("SNR must be strictly positive (V(0) = 0)")
    if np.any(m <= 0.0):
        raise ValueError("blocklength must be positive")
    out = np.sqrt(m / dispersion(alpha)) * (capacity(alpha) - np.asarray(d, dtype=float) / m) * LN2
    return float(out) if out.ndim == 0 else out


def block_error_prob(gamma: ArrayLike, m: ArrayLike, d: ArrayLike) -> float | NDArray[np.float64]:
    """Normal-approximation block error probability for ``d`` bits in ``m`` channel uses."""
    return q_function(omega(gamma, m, d))


def block_success_prob(gamma: ArrayLike, m: ArrayLike, d: ArrayLike) -> float | NDArray[np.float64]:
    """1 - block_error_prob, evaluated as Q(-omega) so tiny values keep their digits."""
    return q_function(-np.asarray(omega(gamma, m, d)))


def effective_error(eps_ci: ArrayLike, eps_bar_si: ArrayLike) -> float | NDArray[np.float64]:
    """Error of the second SIC stage including propagation from the first."""
    out = (1.0 - np.asarray(eps_ci, dtype=float)) * np.asarray(eps_bar_si, dtype=float) + np.asarray(eps_ci, dtype=float)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class StarRisProfile:
    """Reflection (U_c side) and transmission (U_s side) coefficient vectors."""

    v_c: NDArray[np.complex128]
    v_s: NDArray[np.complex128]

    def __post_init__(self) -> None:
        v_c = np.array(self.v_c, dtype=np.complex128)
        v_s = np.array(self.v_s, dtype=np.complex128)
        if v_c.ndim != 1 or v_c.shape != v_s.shape:
            raise ValueError("v_c and v_s must be 1-D vectors of equal length")
        excess = np.abs(v_c) ** 2 + np.abs(v_s) ** 2 - 1.0
        if np.any(excess > ENERGY_TOL):
            n = int(np.argmax(excess))
            raise ValueError(f"energy-splitting constraint violated at element {n} (excess {excess[n]:.3e})")
        v_c.setflags(write=False)
        v_s.setflags(write=False)
        object.__setattr__(self, "v_c", v_c)
        object.__setattr__(self, "v_s", v_s)

    @classmethod
    def from_polar(cls, mu_c, theta_c, mu_s, theta_s) -> "StarRisProfile":
        return cls(np.asarray(mu_c) * np.exp(1j * np.asarray(theta_c)), np.asarray(mu_s) * np.exp(1j * np.asarray(theta_s)))

    @property
    def N(self) -> int:
        return self.v_c.shape[0]

    def coefficients(self, user: str) -> NDArray[np.complex128]:
        if user == "c":
            return self.v_c
        if user == "s":
            return self.v_s
        raise ValueError(f"unknown user {user!r}")


@dataclass(frozen=True)
class ResourceAllocation:
    a_c: float
    a_s: float
    m: float

    def __post_init__(self) -> None:
        if not 0.0 < self.a_s < self.a_c:
            raise ValueError("secure SIC order requires 0 < a_s < a_c")
        if self.a_c + self.a_s > 1.0 + 1e-12:
            raise ValueError("power fractions exceed the budget")
        if not self.m > 0:
            raise ValueError("blocklength must be positive")

    @classmethod
    def full_power(cls, a_c: float, m: float) -> "ResourceAllocation":
        return cls(a_c, 1.0 - a_c, m)


@dataclass(frozen=True)
class QosRequirements:
    eps_c: float = 1e-3
    eps_s: float = 1e-3
    t_max_s: float = 0.715e-3
    d_c: int = 100
    d_s: int = 100
    m_max: int = 1000

    def __post_init__(self) -> None:
        for name in ("eps_c", "eps_s"):
            if not 0.0 < getattr(self, name) < 0.5:
                raise ValueError(f"{name} must lie in (0, 0.5)")
        if not self.t_max_s > 0:
            raise ValueError("t_max_s must be positive")
        if int(self.d_c) < 1 or int(self.d_s) < 1 or int(self.m_max) < 1:
            raise ValueError("packet sizes and m_max must be positive integers")

    @property
    def m_floor(self) -> float:
        return float(self.d_c + self.d_s)

    def m_upper(self, bandwidth_hz: float) -> float:
        """Largest blocklength allowed by both m_max and T <= T_max."""
        return float(min(self.m_max, math.floor(bandwidth_hz * self.t_max_s + 1e-9)))


@dataclass(frozen=True)
class PerformanceTuple:
    eps_cc: float
    eps_ss: float
    delta_sc: float
    t_s: float

    @property
    def eps_sc(self) -> float:
        return 1.0 - self.delta_sc

    def meets(self, qos: QosRequirements, tol: float = 0.0) -> bool:
        return (
            self.eps_cc <= qos.eps_c * (1.0 + tol)
            and self.eps_ss <= qos.eps_s * (1.0 + tol)
            and self.t_s <= qos.t_max_s * (1.0 + tol)
        )


def effective_gain(profile: StarRisProfile, chan: ChannelRealization, user: str) -> float:
    """|v_i^H h_i|^2."""
    return float(abs(np.vdot(profile.coefficients(user), chan.cascade(user))) ** 2)


def sinr_first_stage(
    profile: StarRisProfile,
    chan: ChannelRealization,
    alloc: ResourceAllocation,
    params: ChannelParams,
    user: str,
) -> float:
    """SINR for decoding s_c at U_i, with s_s as interference."""
    x = params.transmit_power_mw * effective_gain(profile, chan, user)
    return alloc.a_c * x / (alloc.a_s * x + params.noise_power_mw(user))


def sinr_second_stage(
    profile: StarRisProfile,
    chan: ChannelRealization,
    alloc: ResourceAllocation,
    params: ChannelParams,
    user: str,
) -> float:
    """SNR for decoding s_s at U_i once s_c has been cancelled."""
    x = params.transmit_power_mw * effective_gain(profile, chan, user)
    return alloc.a_s * x / params.noise_power_mw(user)


def performance_from_snr(
    x_c: ArrayLike,
    x_s: ArrayLike,
    a_c: ArrayLike,
    a_s: ArrayLike,
    m: ArrayLike,
    qos: QosRequirements,
    bandwidth_hz: float,
):
    """Vectorized performance model on normalized gains x_i = P |v_i^H h_i|^2 / sigma_i^2.

    Returns ``(eps_cc, eps_ss, delta_sc, T)`` arrays broadcast over the inputs.
    """
    x_c, x_s, a_c, a_s, m = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (x_c, x_s, a_c, a_s, m)))
    gamma_cc = a_c * x_c / (a_s * x_c + 1.0)
    gamma_cs = a_c * x_s / (a_s * x_s + 1.0)
    gamma_sc = a_s * x_c
    gamma_ss = a_s * x_s
    eps_cc = block_error_prob(gamma_cc, m, qos.d_c)
    eps_cs = block_error_prob(gamma_cs, m, qos.d_c)
    eps_ss = effective_error(eps_cs, block_error_prob(gamma_ss, m, qos.d_s))
    # Leakage = P(U_c decodes both stages); product of success probabilities.
    delta_sc = block_success_prob(gamma_cc, m, qos.d_c) * block_success_prob(gamma_sc, m, qos.d_s)
    return eps_cc, eps_ss, delta_sc, m / bandwidth_hz


def evaluate_performance(
    profile: StarRisProfile,
    chan: ChannelRealization,
    alloc: ResourceAllocation,
    qos: QosRequirements,
    params: ChannelParams,
) -> PerformanceTuple:
    x_c = params.snr_scale("c") * effective_gain(profile, chan, "c")
    x_s = params.snr_scale("s") * effective_gain(profile, chan, "s")
    eps_cc, eps_ss, delta_sc, t = performance_from_snr(x_c, x_s, alloc.a_c, alloc.a_s, alloc.m, qos, params.bandwidth_hz)
    return PerformanceTuple(float(eps_cc), float(eps_ss), float(delta_sc), float(t))


def omega_derivatives(alpha: float, m: float, d: float) -> tuple[float, NDArray[np.float64], NDArray[np.float64]]:
    """Value, gradient and Hessian of omega in (alpha, m) for fixed packet size d.

    Closed forms use u = 1 + alpha, t = u^2 - 1 and W = V^{-1/2} = u / sqrt(t).
    """
    if alpha <= 0.0 or m <= 0.0:
        raise ValueError("omega_derivatives needs alpha > 0 and m > 0")
    u = 1.0 + alpha
    t = alpha * alpha + 2.0 * alpha
    C = math.log1p(alpha) / LN2
    W = u / math.sqrt(t)
    W1 = -(t ** -1.5)
    W2 = 3.0 * u * t ** -2.5
    slack = (alpha * alpha + 2.0 * alpha - math.log1p(alpha)) / LN2  # t/ln2 - C, cancellation-free
    CW = C * W
    CW1 = t ** -1.5 * slack
    CW2 = -3.0 * u * t ** -2.5 * slack + t ** -1.5 * (2.0 * t + 1.0) / (u * LN2)
    s = math.sqrt(m)
    value = LN2 * (s * CW - d * W / s)
    grad = LN2 * np.array([s * CW1 - d * W1 / s, CW / (2.0 * s) + d * W / (2.0 * s**3)])
    h_aa = s * CW2 - d * W2 / s
    h_am = CW1 / (2.0 * s) + d * W1 / (2.0 * s**3)
    h_mm = -CW / (4.0 * s**3) - 3.0 * d * W / (4.0 * s**5)
    hess = LN2 * np.array([[h_aa, h_am], [h_am, h_mm]])
    return value, grad, hess
