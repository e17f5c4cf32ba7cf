"""Convex inner problem: beamforming and blocklength at fixed power split.

Real decision vector (N elements, scaled blocklength ``mu = m / m_hi``)::

    [Re v_c, Im v_c, Re v_s, Im v_s, mu, a_cc, a_cs, a_sc, a_ss, b_c, b_s]

Gains are normalized, ``b_i ~ P |v_i^H h_i|^2 / sigma_i^2``, so the problem only
ever sees SINR-like quantities.  The objective is the affine expansion of the
leakage rate gap around the anchor; every constraint is convex inside the
region where the rate gap is concave and the second-user Q arguments stay above
``Q^{-1}(0.3)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from ..channel import ChannelParams, ChannelRealization
from ..fbl import LN2, QosRequirements, ResourceAllocation, StarRisProfile, omega_derivatives, q_inverse
from .barrier import BarrierError, barrier_minimize, find_strictly_feasible
from .model import AuxVariables, DesignPoint, InfeasibleError, SolverConfig, SolverError
from .surrogates import rate_gap, surrogate_slopes

_SQRT_2PI = math.sqrt(2.0 * math.pi)

CONSTRAINT_NAMES = (
    "eps_cc<=eps_c",
    "eps_ss<=eps_s",
    "omega_cs>=q_box",
    "omega_ss>=q_box",
    "alpha_sc>=gain_c",
    "alpha_cc<=sinr(beta_c)",
    "alpha_cs<=sinr(beta_s)",
    "alpha_ss<=a_s*beta_s",
    "beta_c<=gain_lb_c",
    "beta_s<=gain_lb_s",
)
N_RELAX = len(CONSTRAINT_NAMES)


def _q(x: float) -> float:
    return 0.5 * math.erfc(x / math.sqrt(2.0))


def _phi(x: float) -> float:
    return math.exp(-0.5 * x * x) / _SQRT_2PI


def _real_form(h: NDArray[np.complex128]) -> NDArray[np.float64]:
    """M with z^T M z = |v^H h|^2 for z = [Re v, Im v]."""
    R = np.outer(h, h.conj())
    return np.block([[R.real, -R.imag], [R.imag, R.real]])


@dataclass
class P4Result:
    point: DesignPoint
    z: NDArray[np.float64]
    surrogate: float  # affine model value at the solution
    true_gap: float  # rate gap g = omega_sc / ln 2 at the solution
    newton_steps: int


class P4Problem:
    """Constraint oracle for one MM step (see module docstring for layout)."""

    def __init__(
        self,
        hbar_c: NDArray[np.complex128],
        hbar_s: NDArray[np.complex128],
        a_c: float,
        z_anchor: NDArray[np.float64],
        qos: QosRequirements,
        m_lo: float,
        m_hi: float,
        q_box: float,
        fix_m: bool = False,
    ):
        N = hbar_c.size
        self.N = N
        self.n = 4 * N + 7
        self.a_c = a_c
        self.a_s = 1.0 - a_c
        self.qos = qos
        self.m_lo, self.m_hi = m_lo, m_hi
        self.fix_m = fix_m
        self.q_c = float(q_inverse(qos.eps_c))
        self.q_box = q_box
        self.M_c = _real_form(hbar_c)
        self.M_s = _real_form(hbar_s)
        zc0 = z_anchor[: 2 * N]
        zs0 = z_anchor[2 * N : 4 * N]
        # affine gain minorants: 2 z0^T M z - z0^T M z0
        self.lin_c = 2.0 * self.M_c @ zc0
        self.lin_s = 2.0 * self.M_s @ zs0
        self.off_c = float(zc0 @ self.M_c @ zc0)
        self.off_s = float(zs0 @ self.M_s @ zs0)
        self.I_MU = 4 * N
        self.I_ACC, self.I_ACS, self.I_ASC, self.I_ASS, self.I_BC, self.I_BS = range(4 * N + 1, 4 * N + 7)
        n_bounds = 0 if fix_m else 2
        # generous caps keep the phase-I barrier bounded; never active at a solution
        G_c = float(np.sum(np.abs(hbar_c))) ** 2
        G_s = float(np.sum(np.abs(hbar_s))) ** 2
        self.caps = np.array([
            a_c / self.a_s + 1.0,
            a_c / self.a_s + 1.0,
            self.a_s * (2.0 * G_c + 1.0) + 1.0,
            self.a_s * (2.0 * G_s + 1.0) + 1.0,
            2.0 * G_c + 1.0,
            2.0 * G_s + 1.0,
        ])
        self.n_con = N_RELAX + n_bounds + N + 12
        self.relax = np.zeros(self.n_con, dtype=bool)
        self.relax[:N_RELAX] = True
        self.free = np.ones(self.n, dtype=bool)
        if fix_m:
            self.free[self.I_MU] = False

    # -- helpers -------------------------------------------------------
    def _omega(self, alpha: float, m: float, d: float):
        val, grad, hess = omega_derivatives(alpha, m, d)
        s = self.m_hi  # chain rule to the scaled blocklength
        grad = np.array([grad[0], grad[1] * s])
        hess = np.array([[hess[0, 0], hess[0, 1] * s], [hess[0, 1] * s, hess[1, 1] * s * s]])
        return val, grad, hess

    def _split(self, z):
        N = self.N
        return z[: 2 * N], z[2 * N : 4 * N], z[self.I_MU] * self.m_hi

    def gain_c(self, z) -> float:
        zc = z[: 2 * self.N]
        return float(zc @ self.M_c @ zc)

    def gain_s(self, z) -> float:
        zs = z[2 * self.N : 4 * self.N]
        return float(zs @ self.M_s @ zs)

    # -- oracle --------------------------------------------------------
    def constraints(self, z):
        N, a_c, a_s = self.N, self.a_c, self.a_s
        zc, zs, m = self._split(z)
        acc, acs, asc, ass, bc, bs = z[self.I_ACC : self.I_BS + 1]
        g = np.full(self.n_con, np.inf)
        jac = np.zeros((self.n_con, self.n))
        if min(acc, acs, asc, ass, bc, bs) <= 0.0 or m <= 0.0:
            return g, jac
        I_MU = self.I_MU
        d_c, d_s = self.qos.d_c, self.qos.d_s

        w_cc, dw_cc, _ = self._omega(acc, m, d_c)
        w_cs, dw_cs, _ = self._omega(acs, m, d_c)
        w_ss, dw_ss, _ = self._omega(ass, m, d_s)

        g[0] = self.q_c - w_cc
        jac[0, self.I_ACC] = -dw_cc[0]
        jac[0, I_MU] = -dw_cc[1]

        q1, q2 = _q(w_cs), _q(w_ss)
        p1, p2 = _phi(w_cs), _phi(w_ss)
        F = q1 + (1.0 - q1) * q2
        dF1 = -p1 * (1.0 - q2)
        dF2 = -(1.0 - q1) * p2
        e = self.qos.eps_s
        g[1] = F / e - 1.0
        jac[1, self.I_ACS] = dF1 * dw_cs[0] / e
        jac[1, self.I_ASS] = dF2 * dw_ss[0] / e
        jac[1, I_MU] = (dF1 * dw_cs[1] + dF2 * dw_ss[1]) / e

        g[2] = self.q_box - w_cs
        jac[2, self.I_ACS] = -dw_cs[0]
        jac[2, I_MU] = -dw_cs[1]
        g[3] = self.q_box - w_ss
        jac[3, self.I_ASS] = -dw_ss[0]
        jac[3, I_MU] = -dw_ss[1]

        Mzc = self.M_c @ zc
        g[4] = a_s * float(zc @ Mzc) - asc
        jac[4, : 2 * N] = 2.0 * a_s * Mzc
        jac[4, self.I_ASC] = -1.0

        for row, ia, b in ((5, self.I_ACC, bc), (6, self.I_ACS, bs)):
            den = a_s * b + 1.0
            ib = self.I_BC if row == 5 else self.I_BS
            g[row] = z[ia] - a_c * b / den
            jac[row, ia] = 1.0
            jac[row, ib] = -a_c / (den * den)

        g[7] = ass - a_s * bs
        jac[7, self.I_ASS] = 1.0
        jac[7, self.I_BS] = -a_s

        g[8] = bc - (float(self.lin_c @ zc) - self.off_c)
        jac[8, self.I_BC] = 1.0
        jac[8, : 2 * N] = -self.lin_c
        g[9] = bs - (float(self.lin_s @ zs) - self.off_s)
        jac[9, self.I_BS] = 1.0
        jac[9, 2 * N : 4 * N] = -self.lin_s

        k = N_RELAX
        if not self.fix_m:
            g[k] = (self.m_lo - m) / self.m_hi
            jac[k, I_MU] = -1.0
            g[k + 1] = (m - self.m_hi) / self.m_hi
            jac[k + 1, I_MU] = 1.0
            k += 2

        energy = z[:N] ** 2 + z[N : 2 * N] ** 2 + z[2 * N : 3 * N] ** 2 + z[3 * N : 4 * N] ** 2
        rows = np.arange(k, k + N)
        g[rows] = energy - 1.0
        for blk in range(4):
            jac[rows, blk * N + np.arange(N)] = 2.0 * z[blk * N : (blk + 1) * N]
        k += N

        for j, idx in enumerate(range(self.I_ACC, self.I_BS + 1)):
            g[k + j] = -z[idx]
            jac[k + j, idx] = -1.0
            g[k + 6 + j] = z[idx] / self.caps[j] - 1.0
            jac[k + 6 + j, idx] = 1.0 / self.caps[j]
        if not np.all(np.isfinite(g)):
            g[:] = np.inf
        return g, jac

    def weighted_hessian(self, z, w):
        N, a_c, a_s = self.N, self.a_c, self.a_s
        zc, zs, m = self._split(z)
        acc, acs, asc, ass, bc, bs = z[self.I_ACC : self.I_BS + 1]
        H = np.zeros((self.n, self.n))
        I_MU = self.I_MU
        d_c, d_s = self.qos.d_c, self.qos.d_s

        w_cc, dw_cc, H_cc = self._omega(acc, m, d_c)
        w_cs, dw_cs, H_cs = self._omega(acs, m, d_c)
        w_ss, dw_ss, H_ss = self._omega(ass, m, d_s)

        def add(idx, block, weight):
            H[np.ix_(idx, idx)] += weight * block

        add([self.I_ACC, I_MU], -H_cc, w[0])
        add([self.I_ACS, I_MU], -H_cs, w[2])
        add([self.I_ASS, I_MU], -H_ss, w[3])

        # composite second-user error F(w_cs, w_ss) / eps_s
        q1, q2 = _q(w_cs), _q(w_ss)
        p1, p2 = _phi(w_cs), _phi(w_ss)
        dF1 = -p1 * (1.0 - q2)
        dF2 = -(1.0 - q1) * p2
        F11 = w_cs * p1 * (1.0 - q2)
        F22 = (1.0 - q1) * w_ss * p2
        F12 = p1 * p2
        idx = [self.I_ACS, self.I_ASS, I_MU]
        J = np.array([[dw_cs[0], 0.0, dw_cs[1]], [0.0, dw_ss[0], dw_ss[1]]])
        Hw = np.zeros((3, 3))
        Hw[np.ix_([0, 2], [0, 2])] += dF1 * H_cs
        Hw[np.ix_([1, 2], [1, 2])] += dF2 * H_ss
        Hw += J.T @ np.array([[F11, F12], [F12, F22]]) @ J
        add(idx, Hw / self.qos.eps_s, w[1])

        H[: 2 * N, : 2 * N] += (w[4] * 2.0 * a_s) * self.M_c
        for row, ib, b in ((5, self.I_BC, bc), (6, self.I_BS, bs)):
            den = a_s * b + 1.0
            H[ib, ib] += w[row] * 2.0 * a_c * a_s / den**3

        k = N_RELAX + (0 if self.fix_m else 2)
        we = 2.0 * w[k : k + N]
        for blk in range(4):
            ii = blk * N + np.arange(N)
            H[ii, ii] += we
        return H

    # -- packing -------------------------------------------------------
    def pack(self, profile: StarRisProfile, m: float, aux: AuxVariables) -> NDArray[np.float64]:
        z = np.concatenate([profile.v_c.real, profile.v_c.imag, profile.v_s.real, profile.v_s.imag])
        return np.concatenate([z, [m / self.m_hi, aux.alpha_cc, aux.alpha_cs, aux.alpha_sc, aux.alpha_ss, aux.beta_c, aux.beta_s]])

    def unpack(self, z) -> DesignPoint:
        N = self.N
        v_c = z[:N] + 1j * z[N : 2 * N]
        v_s = z[2 * N : 3 * N] + 1j * z[3 * N : 4 * N]
        aux = AuxVariables(*(max(float(x), 0.0) for x in z[self.I_ACC : self.I_BS + 1]))
        m = float(z[self.I_MU] * self.m_hi)
        return DesignPoint(StarRisProfile(v_c, v_s), ResourceAllocation.full_power(self.a_c, m), aux)

    def interior_start(self, profile: StarRisProfile, m: float, eta: float) -> NDArray[np.float64]:
        """Anchor-based start with auxiliaries backed off from their bounds by ``eta``."""
        shrink = math.sqrt(1.0 - 1e-8)
        excess = np.abs(profile.v_c) ** 2 + np.abs(profile.v_s) ** 2
        scale = np.where(excess >= 1.0 - 1e-8, shrink / np.sqrt(np.maximum(excess, 1e-300)), 1.0)
        v_c, v_s = profile.v_c * scale, profile.v_s * scale
        if not self.fix_m:
            span = self.m_hi - self.m_lo
            m = min(max(m, self.m_lo + 1e-7 * span), self.m_hi - 1e-7 * span)
        z = np.concatenate([v_c.real, v_c.imag, v_s.real, v_s.imag, [m / self.m_hi], np.zeros(6)])
        zc, zs = z[: 2 * self.N], z[2 * self.N : 4 * self.N]
        lb_c = float(self.lin_c @ zc) - self.off_c
        lb_s = float(self.lin_s @ zs) - self.off_s
        bc = max(lb_c, 1e-300) * (1.0 - eta)
        bs = max(lb_s, 1e-300) * (1.0 - eta)
        a_c, a_s = self.a_c, self.a_s
        z[self.I_BC], z[self.I_BS] = bc, bs
        z[self.I_ACC] = a_c * bc / (a_s * bc + 1.0) * (1.0 - eta)
        z[self.I_ACS] = a_c * bs / (a_s * bs + 1.0) * (1.0 - eta)
        z[self.I_ASS] = a_s * bs * (1.0 - eta)
        z[self.I_ASC] = a_s * self.gain_c(z) * (1.0 + eta) + 1e-300
        return z


def normalized_channels(chan: ChannelRealization, params: ChannelParams):
    return chan.h_c * math.sqrt(params.snr_scale("c")), chan.h_s * math.sqrt(params.snr_scale("s"))


def solve_p4_detailed(
    chan: ChannelRealization,
    a_c: float,
    anchor: DesignPoint,
    qos: QosRequirements,
    params: ChannelParams,
    cfg: SolverConfig,
    *,
    fix_m: bool = False,
) -> P4Result:
    """One MM step; see :func:`solve_p4`.  Also returns diagnostics."""
    if not 0.5 < a_c < 1.0:
        raise ValueError("a_c must lie in (0.5, 1)")
    hbar_c, hbar_s = normalized_channels(chan, params)
    m_hi = qos.m_upper(params.bandwidth_hz)
    m_lo = qos.m_floor
    if m_lo >= m_hi:
        raise InfeasibleError("blocklength window is empty", "m_floor<=m<=m_upper", m_lo - m_hi)
    m0 = float(anchor.alloc.m)
    prof = anchor.profile
    # anchor of the affine models
    zc0 = np.concatenate([prof.v_c.real, prof.v_c.imag])
    zs0 = np.concatenate([prof.v_s.real, prof.v_s.imag])
    z_anchor = np.concatenate([zc0, zs0])
    problem = P4Problem(
        hbar_c, hbar_s, a_c, z_anchor, qos, m_lo, m_hi,
        q_box=float(q_inverse(0.3)) + cfg.lemma4_margin, fix_m=fix_m,
    )
    alpha_anchor = (1.0 - a_c) * problem.gain_c(np.concatenate([z_anchor, np.zeros(7)]))
    if alpha_anchor <= 0.0:
        raise SolverError("anchor has zero leakage SINR; surrogate undefined", anchor)
    d_alpha, d_m = surrogate_slopes(alpha_anchor, m0, qos.d_s)
    g_anchor = rate_gap(alpha_anchor, m0, qos.d_s)
    c = np.zeros(problem.n)
    c[problem.I_ASC] = d_alpha
    # small reward on the far user's gain picks, among (near-)optimal
    # surfaces, the one leaving most reliability slack for the power search
    c[problem.I_BS] = -cfg.far_gain_weight * abs(d_alpha)
    if not fix_m:
        c[problem.I_MU] = d_m * m_hi

    z0 = problem.interior_start(prof, m0, cfg.interior_margin)
    steps = 0
    g0, _ = problem.constraints(z0)
    if not (np.all(np.isfinite(g0)) and np.all(g0 < 0.0)):
        try:
            z0, steps = find_strictly_feasible(
                problem, z0, problem.relax, free=problem.free, margin=1e-4, max_newton=cfg.max_newton
            )
        except BarrierError as exc:
            g_last, _ = problem.constraints(exc.z) if exc.z is not None else (g0, None)
            g_rel = np.where(np.isfinite(g_last[:N_RELAX]), g_last[:N_RELAX], np.inf)
            worst = int(np.argmax(g_rel))
            raise InfeasibleError(
                f"P4 infeasible at a_c={a_c:.6f}: {CONSTRAINT_NAMES[worst]} violated by {g_rel[worst]:.3e}",
                CONSTRAINT_NAMES[worst],
                float(g_rel[worst]),
            ) from exc
    try:
        res = barrier_minimize(
            problem, z0, c, free=problem.free, mu=cfg.barrier_mu, gap_tol=cfg.inner_tol,
            max_newton=cfg.max_newton, shrink=cfg.line_search_shrink,
        )
    except (BarrierError, np.linalg.LinAlgError) as exc:
        raise SolverError(f"P4 barrier failure: {exc}", anchor) from exc
    steps += res.newton_steps
    if not res.converged and res.gap > 1e3 * cfg.inner_tol:
        raise SolverError(f"P4 did not converge (gap {res.gap:.2e}) within {cfg.max_newton} Newton steps", problem.unpack(res.z))
    z = res.z
    point = problem.unpack(z)
    m_new = point.alloc.m
    alpha_new = (1.0 - a_c) * problem.gain_c(z)
    surrogate = g_anchor + d_m * (m_new - m0) + d_alpha * (alpha_new - alpha_anchor)
    return P4Result(point, z, surrogate, rate_gap(alpha_new, m_new, qos.d_s), steps)


def solve_p4(
    chan: ChannelRealization,
    a_c: float,
    anchor: DesignPoint,
    qos: QosRequirements,
    params: ChannelParams,
    cfg: SolverConfig,
    *,
    fix_m: bool = False,
) -> DesignPoint:
    """Solve the convex MM subproblem around ``anchor`` at power split ``a_c``.

    Minimizes the affine upper model of the leakage rate gap over beamforming,
    blocklength (unless ``fix_m``) and auxiliaries.  A phase-I restoration is
    run when the anchor is not strictly feasible.

    Raises:
        InfeasibleError: QoS targets unreachable at this ``a_c``.
        SolverError: the interior-point method stalled.
    """
    return solve_p4_detailed(chan, a_c, anchor, qos, params, cfg, fix_m=fix_m).point
