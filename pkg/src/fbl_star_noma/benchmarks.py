"""Baselines: the non-optimized (m, a_c) trade-off grid, a block coordinate
descent optimizer, and convergence-trace comparison."""
from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .channel import ChannelParams, ChannelRealization
from .fbl import (
    PerformanceTuple,
    QosRequirements,
    ResourceAllocation,
    StarRisProfile,
    effective_gain,
    evaluate_performance,
    omega,
    performance_from_snr,
)
from .optimizer.ao import _record, initialize, qos_residual, tight_aux
from .optimizer.model import DesignPoint, InfeasibleError, Solution, SolverConfig, SolverError
from .optimizer.p4 import solve_p4_detailed

log = logging.getLogger(__name__)

A_C_SCAN_STEP = 1e-3


@dataclass
class GridSweepResult:
    m_values: np.ndarray
    a_c_values: np.ndarray
    tuples: np.ndarray  # object array of PerformanceTuple, shape (len(m), len(a_c))
    eps_cc: np.ndarray
    eps_ss: np.ndarray
    delta_sc: np.ndarray
    t_s: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return self.tuples.shape

    def feasible_mask(self, qos: QosRequirements, delta_max: float = 1.0) -> np.ndarray:
        """Nodes meeting both reliability targets, the delay cap and a leakage ceiling."""
        return (
            (self.eps_cc <= qos.eps_c)
            & (self.eps_ss <= qos.eps_s)
            & (self.t_s <= qos.t_max_s)
            & (self.delta_sc <= delta_max)
        )


def default_fixed_profile(N: int, rng: np.random.Generator) -> StarRisProfile:
    """Non-optimized surface: equal energy split, independent uniform phases."""
    mu = np.full(N, 1.0 / math.sqrt(2.0))
    return StarRisProfile.from_polar(mu, rng.uniform(0.0, 2.0 * math.pi, N), mu, rng.uniform(0.0, 2.0 * math.pi, N))


def grid_sweep(
    chan: ChannelRealization,
    fixed_profile: StarRisProfile,
    m_range: Sequence[float],
    a_c_range: Sequence[float],
    qos: QosRequirements,
    params: ChannelParams,
) -> GridSweepResult:
    """Performance of every (m, a_c) node with a_s = 1 - a_c and a fixed surface."""
    m_values = np.asarray(m_range, dtype=float)
    a_c_values = np.asarray(a_c_range, dtype=float)
    if m_values.ndim != 1 or a_c_values.ndim != 1 or m_values.size == 0 or a_c_values.size == 0:
        raise ValueError("m_range and a_c_range must be non-empty 1-D sequences")
    if np.any((a_c_values <= 0.5) | (a_c_values >= 1.0)):
        raise ValueError("a_c values must lie in (0.5, 1)")
    if np.any((m_values < qos.m_floor) | (m_values > qos.m_max)):
        raise ValueError(f"m values must lie in [{qos.m_floor:g}, {qos.m_max}]")
    x_c = params.snr_scale("c") * effective_gain(fixed_profile, chan, "c")
    x_s = params.snr_scale("s") * effective_gain(fixed_profile, chan, "s")
    M, A = np.meshgrid(m_values, a_c_values, indexing="ij")
    eps_cc, eps_ss, delta, t = performance_from_snr(x_c, x_s, A, 1.0 - A, M, qos, params.bandwidth_hz)
    tuples = np.empty(M.shape, dtype=object)
    for idx in np.ndindex(M.shape):
        tuples[idx] = PerformanceTuple(float(eps_cc[idx]), float(eps_ss[idx]), float(delta[idx]), float(t[idx]))
    return GridSweepResult(m_values, a_c_values, tuples, eps_cc, eps_ss, delta, t)


# -- block coordinate descent ---------------------------------------------


def _gains(profile, chan, params):
    return (
        params.snr_scale("c") * effective_gain(profile, chan, "c"),
        params.snr_scale("s") * effective_gain(profile, chan, "s"),
    )


def _scan_objective(x_c, x_s, a_c, m, qos, params):
    """Leakage Q-argument on a scan, +inf where a reliability target fails."""
    a_c, m = np.broadcast_arrays(np.asarray(a_c, dtype=float), np.asarray(m, dtype=float))
    eps_cc, eps_ss, _, t = performance_from_snr(x_c, x_s, a_c, 1.0 - a_c, m, qos, params.bandwidth_hz)
    obj = np.asarray(omega((1.0 - a_c) * x_c, m, qos.d_s), dtype=float)
    ok = (eps_cc <= qos.eps_c) & (eps_ss <= qos.eps_s) & (t <= qos.t_max_s * (1.0 + 1e-12))
    return np.where(ok, obj, np.inf)


def bcd_optimize(
    chan: ChannelRealization,
    qos: QosRequirements,
    params: ChannelParams,
    cfg: SolverConfig | None = None,
    rng: np.random.Generator | None = None,
) -> Solution:
    """Block coordinate descent baseline.

    Each round runs three blocks in order: (i) one convex beamforming step with
    m and a_c fixed, (ii) an exhaustive a_c scan at step 1e-3, (iii) an
    exhaustive integer m scan over [m_floor, m_upper].  The current value is
    always a scan candidate, so the leakage objective never increases.  Stops
    when the leakage error moves by less than ``zeta2`` or after ``iter_max``
    rounds.
    """
    cfg = SolverConfig() if cfg is None else cfg
    t0 = time.perf_counter()
    point = initialize(chan, qos, params, rng)
    trace = [_record(0, 0, "init", point, chan, qos, params, t0)]
    m_hi = qos.m_upper(params.bandwidth_hz)
    m_grid = np.arange(math.ceil(qos.m_floor), math.floor(m_hi) + 1, dtype=float)
    n_steps = int(round(0.5 / A_C_SCAN_STEP))
    a_grid = 0.5 + A_C_SCAN_STEP * np.arange(1, n_steps)
    delta_prev = trace[-1].delta_sc
    inner_total = 0
    status = "max_iter"
    rnd = 0
    for rnd in range(1, cfg.iter_max + 1):
        a_c, m = point.alloc.a_c, point.alloc.m
        # (i) beamforming, blocklength and power split held fixed
        try:
            res = solve_p4_detailed(chan, a_c, point, qos, params, cfg, fix_m=True)
            inner_total += 1
            if res.true_gap * math.log(2.0) <= trace[-1].objective + 1e-9:
                point = res.point
            else:
                log.warning("bcd: beamforming step raised the objective; kept previous surface")
        except SolverError as exc:
            log.warning("bcd: beamforming step failed (%s); kept previous surface", exc)
        except InfeasibleError as exc:
            exc.trace = list(trace)
            raise
        x_c, x_s = _gains(point.profile, chan, params)
        # (ii) power split
        cand = np.append(a_grid, a_c)
        obj = _scan_objective(x_c, x_s, cand, m, qos, params)
        a_c = float(cand[int(np.argmin(obj))])
        # (iii) blocklength
        cand = np.append(m_grid, m)
        obj = _scan_objective(x_c, x_s, a_c, cand, qos, params)
        m = float(cand[int(np.argmin(obj))])
        point = DesignPoint(point.profile, ResourceAllocation.full_power(a_c, m), tight_aux(x_c, x_s, a_c))
        rec = _record(rnd, 0, "block", point, chan, qos, params, t0)
        trace.append(rec)
        if abs(rec.delta_sc - delta_prev) < cfg.zeta2:
            status = "converged"
            break
        delta_prev = rec.delta_sc

    if point.alloc.m != math.floor(point.alloc.m):
        m = float(min(math.ceil(point.alloc.m), m_hi))
        point = DesignPoint(point.profile, ResourceAllocation.full_power(point.alloc.a_c, m), point.aux)
    trace.append(_record(rnd, 0, "final", point, chan, qos, params, t0))
    perf = evaluate_performance(point.profile, chan, point.alloc, qos, params)
    return Solution(
        point=point,
        performance=perf,
        trace=trace,
        status=status,
        method="bcd",
        outer_iters=rnd,
        inner_iters_total=inner_total,
        eps_cc_gap=abs(perf.eps_cc - qos.eps_c),
        power_gap=abs(point.alloc.a_c + point.alloc.a_s - 1.0),
        wall_s=time.perf_counter() - t0,
    )


# -- trace comparison ------------------------------------------------------


def iterations_to_converge(series: Sequence[float], tol: float) -> int:
    """First outer index from which the series stays within ``tol`` of its last value."""
    s = np.asarray(series, dtype=float)
    if s.size == 0:
        raise ValueError("empty series")
    far = np.flatnonzero(np.abs(s - s[-1]) > tol)
    return 0 if far.size == 0 else int(far[-1]) + 1


@dataclass
class TraceComparison:
    method_a: str
    method_b: str
    series_a: list[float]
    series_b: list[float]
    gap: list[float]  # a - b per outer index, shorter series padded with its last value
    iters_a: int
    iters_b: int
    tol: float
    meta: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "TraceComparison":
        return cls(**json.loads(text))


def outer_objectives(sol: Solution, key: str = "delta_sc") -> list[float]:
    """Leakage probability (or another trace field) at the start point and after each outer round."""
    return [getattr(r, key) for r in sol.outer_series()]


def compare_traces(a: Solution, b: Solution, tol: float | None = None, key: str = "delta_sc") -> TraceComparison:
    """Align two runs by outer index and count iterations to convergence for each.

    ``key`` picks the trace field compared: ``delta_sc`` (default) or
    ``objective`` for the leakage Q-argument.
    """
    sa, sb = outer_objectives(a, key), outer_objectives(b, key)
    if not sa or not sb:
        raise ValueError("both traces must be non-empty")
    tol = SolverConfig().zeta1 if tol is None else tol
    n = max(len(sa), len(sb))
    pa = sa + [sa[-1]] * (n - len(sa))
    pb = sb + [sb[-1]] * (n - len(sb))
    return TraceComparison(
        method_a=a.method,
        method_b=b.method,
        series_a=sa,
        series_b=sb,
        gap=[x - y for x, y in zip(pa, pb)],
        iters_a=iterations_to_converge(sa, tol),
        iters_b=iterations_to_converge(sb, tol),
        tol=tol,
    )


def dominates_grid(sol: Solution, chan, qos, params, m_values, a_c_values) -> bool:
    """Leakage no worse than the best feasible node of an (m, a_c) grid at the solution's own surface."""
    grid = grid_sweep(chan, sol.point.profile, m_values, a_c_values, qos, params)
    mask = grid.feasible_mask(qos)
    if not np.any(mask):
        return True
    return bool(sol.performance.delta_sc <= np.min(grid.delta_sc[mask]) * (1.0 + 1e-9))


__all__ = [
    "GridSweepResult",
    "TraceComparison",
    "bcd_optimize",
    "compare_traces",
    "default_fixed_profile",
    "dominates_grid",
    "grid_sweep",
    "iterations_to_converge",
    "outer_objectives",
    "qos_residual",
]
