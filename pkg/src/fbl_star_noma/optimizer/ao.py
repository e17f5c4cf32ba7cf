"""Alternating optimization of beamforming/blocklength (MM inner loop) and the
NOMA power split (one-dimensional search), followed by an integer blocklength
step and a tightness polish of the near user's reliability constraint."""
from __future__ import annotations

import logging
import math
import time

import numpy as np
from scipy.optimize import brentq

from ..channel import ChannelParams, ChannelRealization
from ..convexity import lemma3_holds
from ..fbl import (
    LN2,
    PerformanceTuple,
    QosRequirements,
    ResourceAllocation,
    StarRisProfile,
    block_error_prob,
    effective_error,
    effective_gain,
    evaluate_performance,
    omega,
    performance_from_snr,
    q_function,
    q_inverse,
)
from .model import AuxVariables, DesignPoint, InfeasibleError, Solution, SolverConfig, SolverError, TraceRecord
from .p4 import solve_p4_detailed

log = logging.getLogger(__name__)

A_C_INIT = 0.7
A_C_EDGE = 1.0 - 1e-6
P5_WIDTH = 1e-6
INIT_RETRIES = 10
# slack for the "objective never increases" checks (barrier accuracy)
DESCENT_SLACK = 1e-7


def _normalized_gains(profile: StarRisProfile, chan: ChannelRealization, params: ChannelParams) -> tuple[float, float]:
    return (
        params.snr_scale("c") * effective_gain(profile, chan, "c"),
        params.snr_scale("s") * effective_gain(profile, chan, "s"),
    )


def leakage_omega(x_c: float, a_c: float, m: float, qos: QosRequirements) -> float:
    """omega_sc, the Q argument of the near user's second-stage decoding."""
    return float(omega((1.0 - a_c) * x_c, m, qos.d_s))


def qos_residual(perf: PerformanceTuple, qos: QosRequirements) -> float:
    return max(perf.eps_cc / qos.eps_c - 1.0, perf.eps_ss / qos.eps_s - 1.0, perf.t_s / qos.t_max_s - 1.0)


def tight_aux(x_c: float, x_s: float, a_c: float) -> AuxVariables:
    a_s = 1.0 - a_c
    return AuxVariables(
        alpha_cc=a_c * x_c / (a_s * x_c + 1.0),
        alpha_cs=a_c * x_s / (a_s * x_s + 1.0),
        alpha_sc=a_s * x_c,
        alpha_ss=a_s * x_s,
        beta_c=x_c,
        beta_s=x_s,
    )


def solve_p5(
    chan: ChannelRealization,
    profile: StarRisProfile,
    m: float,
    a_c_lower: float,
    qos: QosRequirements,
    params: ChannelParams,
    width: float = P5_WIDTH,
) -> float:
    """Largest a_c in [a_c_lower, 1) keeping the far user's error within target.

    The leakage objective and the near user's error both fall as a_c grows,
    so the optimum sits on the far user's reliability boundary.  Bisection
    keeps the feasible end of the bracket.

    Raises:
        InfeasibleError: the far user's target already fails at ``a_c_lower``.
    """
    if not 0.5 < a_c_lower < 1.0:
        raise ValueError("a_c_lower must lie in (0.5, 1)")
    _, x_s = _normalized_gains(profile, chan, params)

    def eps_ss(a: float) -> float:
        a_s = 1.0 - a
        eps_cs = block_error_prob(a * x_s / (a_s * x_s + 1.0), m, qos.d_c)
        return float(effective_error(eps_cs, block_error_prob(a_s * x_s, m, qos.d_s)))

    lo = min(a_c_lower, A_C_EDGE)
    if eps_ss(lo) > qos.eps_s:
        raise InfeasibleError(
            f"far-user target unreachable at a_c={lo:.6f} (eps_ss={eps_ss(lo):.3e})",
            "eps_ss<=eps_s",
            eps_ss(lo) / qos.eps_s - 1.0,
        )
    hi = A_C_EDGE
    if eps_ss(hi) <= qos.eps_s:
        return hi
    while hi - lo > width:
        mid = 0.5 * (lo + hi)
        if eps_ss(mid) <= qos.eps_s:
            lo = mid
        else:
            hi = mid
    return lo


def _pareto_amplitudes(g_c: np.ndarray, g_s: np.ndarray, lam: np.ndarray) -> np.ndarray:
    """Per-element reflection amplitudes maximizing sum mu g_c + lam sum sqrt(1-mu^2) g_s.

    Sweeping ``lam`` traces the boundary of the achievable (gain_c, gain_s) set
    for phase-aligned coefficients.  Rows index ``lam``.
    """
    return g_c[None, :] / np.sqrt(g_c[None, :] ** 2 + (lam[:, None] * g_s[None, :]) ** 2 + 1e-300)


def _scan_start(g_c, g_s, qos, params, m):
    """Lowest-leakage feasible (amplitude profile, a_c) on a grid.

    ``g_i`` are per-element normalized channel magnitudes along the chosen
    phases.  Returns ``((mu_c, a_c), residual)`` with ``None`` when nothing on
    the grid meets both reliability targets.
    """
    lam = np.logspace(-2.0, 2.0, 81)
    mu = _pareto_amplitudes(g_c, g_s, lam)
    x_c = ((mu * g_c).sum(axis=1) ** 2)[:, None]
    x_s = ((np.sqrt(1.0 - mu**2) * g_s).sum(axis=1) ** 2)[:, None]
    a_c = np.linspace(0.502, 0.998, 249)[None, :]
    eps_cc, eps_ss, delta, _ = performance_from_snr(x_c, x_s, a_c, 1.0 - a_c, m, qos, params.bandwidth_hz)
    resid = np.maximum(eps_cc / qos.eps_c, eps_ss / qos.eps_s) - 1.0
    ok = resid <= 0.0
    if not np.any(ok):
        return None, float(np.min(resid))
    i, j = np.unravel_index(np.argmin(np.where(ok, delta, np.inf)), delta.shape)
    return (mu[i], float(a_c[0, j])), 0.0


def initialize(
    chan: ChannelRealization,
    qos: QosRequirements,
    params: ChannelParams,
    rng: np.random.Generator | None = None,
) -> DesignPoint:
    """Feasible start: a_c = 0.7, equal energy split, phase-aligned coefficients, m = m_max.

    When that start violates a reliability target, the per-element amplitude
    split and a_c are re-chosen on a grid; if still infeasible, up to ten
    random phase perturbations are tried.

    Raises:
        InfeasibleError: no start point met both reliability targets.
    """
    rng = np.random.default_rng() if rng is None else rng
    m = qos.m_upper(params.bandwidth_hz)
    N = chan.h_c.size
    # v^H h = sum conj(v_n) h_n is maximized by arg(v_n) = arg(h_n)
    theta_c = np.angle(chan.h_c)
    theta_s = np.angle(chan.h_s)
    mu = np.full(N, 1.0 / math.sqrt(2.0))
    profile = StarRisProfile.from_polar(mu, theta_c, mu, theta_s)
    alloc = ResourceAllocation.full_power(A_C_INIT, m)
    perf = evaluate_performance(profile, chan, alloc, qos, params)
    if qos_residual(perf, qos) <= 0.0:
        return DesignPoint(profile, alloc, tight_aux(*_normalized_gains(profile, chan, params), A_C_INIT))

    best_resid = qos_residual(perf, qos)
    h_c = chan.h_c * math.sqrt(params.snr_scale("c"))
    h_s = chan.h_s * math.sqrt(params.snr_scale("s"))
    for attempt in range(INIT_RETRIES + 1):
        if attempt == 0:
            tc, ts = theta_c, theta_s
        else:
            tc = theta_c + rng.uniform(-math.pi / 4, math.pi / 4, N)
            ts = theta_s + rng.uniform(-math.pi / 4, math.pi / 4, N)
        # effective per-element magnitudes along the chosen phases (may be negative)
        g_c = (np.exp(-1j * tc) * h_c).real
        g_s = (np.exp(-1j * ts) * h_s).real
        found, resid = _scan_start(np.maximum(g_c, 0.0), np.maximum(g_s, 0.0), qos, params, m)
        if found is None:
            best_resid = min(best_resid, resid)
            continue
        mu_c, a_c = found
        profile = StarRisProfile.from_polar(mu_c, tc, np.sqrt(np.maximum(1.0 - mu_c**2, 0.0)), ts)
        alloc = ResourceAllocation.full_power(a_c, m)
        if qos_residual(evaluate_performance(profile, chan, alloc, qos, params), qos) > 0.0:
            continue
        log.debug("initialize: fallback start a_c=%.3f (attempt %d)", a_c, attempt)
        return DesignPoint(profile, alloc, tight_aux(*_normalized_gains(profile, chan, params), a_c))
    raise InfeasibleError(
        f"no feasible start found (smallest relative violation {best_resid:.3e})",
        "eps_cc<=eps_c|eps_ss<=eps_s",
        best_resid,
    )


def tighten_near_user(
    point: DesignPoint, chan: ChannelRealization, qos: QosRequirements, params: ChannelParams
) -> DesignPoint:
    """Scale v_c so the near user's error equals its target exactly.

    Any slack in that constraint only raises leakage, so removing it never
    hurts; the far user's quantities do not depend on v_c.
    """
    a_c, a_s, m = point.alloc.a_c, point.alloc.a_s, point.alloc.m
    x_c, x_s = _normalized_gains(point.profile, chan, params)
    q_c = float(q_inverse(qos.eps_c))

    def f(log_gamma: float) -> float:
        return float(omega(math.exp(log_gamma), m, qos.d_c)) - q_c

    lo, hi = -20.0, math.log(a_c / a_s) - 1e-12
    if f(hi) < 0.0:
        raise InfeasibleError("near-user target unreachable at this power split", "eps_cc<=eps_c", float(-f(hi)))
    gamma = math.exp(brentq(f, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200))
    x_target = gamma / (a_c - a_s * gamma)
    scale = math.sqrt(x_target / x_c)
    v_c = point.profile.v_c * scale
    if scale > 1.0 and np.any(np.abs(v_c) ** 2 + np.abs(point.profile.v_s) ** 2 > 1.0):
        log.warning("tighten_near_user: raising v_c would break the energy split; leaving it unchanged")
        return point
    profile = StarRisProfile(v_c, point.profile.v_s)
    x_c_new, _ = _normalized_gains(profile, chan, params)
    return DesignPoint(profile, point.alloc, tight_aux(x_c_new, x_s, a_c))


def _record(outer, inner, kind, point, chan, qos, params, t0, eps_tilde=None) -> TraceRecord:
    perf = evaluate_performance(point.profile, chan, point.alloc, qos, params)
    x_c, _ = _normalized_gains(point.profile, chan, params)
    w = leakage_omega(x_c, point.alloc.a_c, point.alloc.m, qos)
    eps_bar = float(q_function(w))
    return TraceRecord(
        outer=outer,
        inner=inner,
        kind=kind,
        objective=w,
        eps_bar_sc=eps_bar,
        eps_tilde_sc=eps_bar if eps_tilde is None else eps_tilde,
        delta_sc=perf.delta_sc,
        a_c=point.alloc.a_c,
        m=point.alloc.m,
        residual=qos_residual(perf, qos),
        wall_s=time.perf_counter() - t0,
    )


def prob_change(w_new: float, w_old: float) -> float:
    """|Q(w_new) - Q(w_old)| evaluated on the small tail.

    Q(w) sits next to 1 when w is very negative, so the plain difference
    rounds to zero long before the tolerance tests are meant to fire.
    """
    if w_new <= 0.0 and w_old <= 0.0:
        return abs(float(q_function(-w_new)) - float(q_function(-w_old)))
    return abs(float(q_function(w_new)) - float(q_function(w_old)))


def finalize(
    point: DesignPoint,
    chan: ChannelRealization,
    qos: QosRequirements,
    params: ChannelParams,
) -> DesignPoint:
    """Round m up to an integer, redo the power search there, then tighten."""
    m_hi = qos.m_upper(params.bandwidth_hz)
    m_int = float(min(math.ceil(point.alloc.m - 1e-9), m_hi))
    a_c = solve_p5(chan, point.profile, m_int, point.alloc.a_c, qos, params)
    rounded = DesignPoint(point.profile, ResourceAllocation.full_power(a_c, m_int), point.aux)
    return tighten_near_user(rounded, chan, qos, params)


def _certified(point: DesignPoint, chan, qos, params) -> bool:
    x_c, _ = _normalized_gains(point.profile, chan, params)
    alpha = (1.0 - point.alloc.a_c) * x_c
    if alpha <= 0.0:
        return False
    return lemma3_holds(alpha, point.alloc.m, qos.d_s).holds is True


def optimize(
    chan: ChannelRealization,
    qos: QosRequirements,
    params: ChannelParams,
    cfg: SolverConfig | None = None,
    rng: np.random.Generator | None = None,
) -> Solution:
    """Minimize the leakage probability subject to both users' reliability and the delay cap.

    Inner loop: MM steps on (beamforming, blocklength) at fixed a_c until the
    surrogate leakage error moves by at most ``zeta1``.  Outer loop: power
    search, stopping when the leakage error moves by less than ``zeta2`` or
    after ``iter_max`` rounds.  The final blocklength is an integer.

    Raises:
        InfeasibleError: no feasible start or subproblem; ``trace`` holds the history.
    """
    cfg = SolverConfig() if cfg is None else cfg
    t0 = time.perf_counter()
    point = initialize(chan, qos, params, rng)
    trace = [_record(0, 0, "init", point, chan, qos, params, t0)]
    uncertified = 0 if _certified(point, chan, qos, params) else 1
    inner_total = 0
    delta_prev = trace[-1].delta_sc
    status = "max_iter"
    outer = 0
    for outer in range(1, cfg.iter_max + 1):
        a_c = point.alloc.a_c
        w_tilde_prev = trace[-1].objective
        obj_prev = trace[-1].objective
        for inner in range(1, cfg.inner_iter_max + 1):
            try:
                res = solve_p4_detailed(chan, a_c, point, qos, params, cfg)
            except InfeasibleError as exc:
                exc.trace = list(trace)
                raise
            except SolverError as exc:
                if inner_total == 0:
                    raise
                log.warning("optimize: MM step stalled (%s); keeping the last iterate", exc)
                break
            inner_total += 1
            w_tilde = LN2 * res.surrogate
            rec = _record(outer, inner, "mm", res.point, chan, qos, params, t0, float(q_function(w_tilde)))
            if rec.objective > obj_prev + DESCENT_SLACK * max(1.0, abs(obj_prev)):
                log.warning("optimize: MM step raised the objective (%.3e); step rejected", rec.objective - obj_prev)
                break
            point = res.point
            trace.append(rec)
            obj_prev = rec.objective
            if not _certified(point, chan, qos, params):
                uncertified += 1
                log.warning("optimize: iterate outside the certified concavity region (outer %d, inner %d)", outer, inner)
            done = prob_change(w_tilde, w_tilde_prev) <= cfg.zeta1
            w_tilde_prev = w_tilde
            if done:
                break
        a_c_new = solve_p5(chan, point.profile, point.alloc.m, a_c, qos, params)
        x_c, x_s = _normalized_gains(point.profile, chan, params)
        point = DesignPoint(point.profile, ResourceAllocation.full_power(a_c_new, point.alloc.m), tight_aux(x_c, x_s, a_c_new))
        rec = _record(outer, 0, "power", point, chan, qos, params, t0)
        trace.append(rec)
        # |eps_sc - eps_sc_prev| measured as the change in delta_sc = 1 - eps_sc
        if abs(rec.delta_sc - delta_prev) < cfg.zeta2:
            status = "converged"
            break
        delta_prev = rec.delta_sc

    point = finalize(point, chan, qos, params)
    trace.append(_record(outer, 0, "final", point, chan, qos, params, t0))
    perf = evaluate_performance(point.profile, chan, point.alloc, qos, params)
    return Solution(
        point=point,
        performance=perf,
        trace=trace,
        status=status,
        method="ao-mm",
        outer_iters=outer,
        inner_iters_total=inner_total,
        eps_cc_gap=abs(perf.eps_cc - qos.eps_c),
        power_gap=abs(point.alloc.a_c + point.alloc.a_s - 1.0),
        uncertified_iterates=uncertified,
        wall_s=time.perf_counter() - t0,
    )
