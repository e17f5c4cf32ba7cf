from __future__ import annotations

from dataclasses import dataclass, field

from ..fbl import PerformanceTuple, ResourceAllocation, StarRisProfile


class InfeasibleError(RuntimeError):
    """The QoS targets cannot be met; carries the most violated constraint."""

    def __init__(self, message: str, constraint: str = "", violation: float = float("nan"), trace=None):
        super().__init__(message)
        self.constraint = constraint
        self.violation = violation
        self.trace = list(trace or [])


class SolverError(RuntimeError):
    """Inner solver failed to converge within its budget."""

    def __init__(self, message: str, last_point=None):
        super().__init__(message)
        self.last_point = last_point


@dataclass(frozen=True)
class AuxVariables:
    """Auxiliary SINR / gain variables of the epigraph reformulation.

    Gains (``beta_*``) are in normalized SNR units, i.e. P |v^H h|^2 / sigma^2.
    """

    alpha_cc: float
    alpha_cs: float
    alpha_sc: float
    alpha_ss: float
    beta_c: float
    beta_s: float

    def __post_init__(self) -> None:
        if min(self.alpha_cc, self.alpha_cs, self.alpha_sc, self.alpha_ss, self.beta_c, self.beta_s) < 0:
            raise ValueError("auxiliary variables must be nonnegative")


@dataclass(frozen=True)
class DesignPoint:
    profile: StarRisProfile
    alloc: ResourceAllocation
    aux: AuxVariables | None = None


@dataclass(frozen=True)
class SolverConfig:
    zeta1: float = 1e-4
    zeta2: float = 1e-10
    iter_max: int = 30
    inner_iter_max: int = 50
    inner_tol: float = 1e-8
    barrier_mu: float = 10.0
    line_search_shrink: float = 0.5
    max_newton: int = 600
    # relative back-off used when building strictly feasible auxiliaries
    interior_margin: float = 1e-3
    # keep both second-user Q arguments this far above Q^{-1}(0.3)
    lemma4_margin: float = 1e-3
    # tie-break weight on the far user's gain in the convex step (relative)
    far_gain_weight: float = 1e-4

    def __post_init__(self) -> None:
        if not (self.zeta1 > 0 and self.zeta2 > 0 and self.inner_tol > 0):
            raise ValueError("tolerances must be positive")
        if int(self.iter_max) < 1 or int(self.inner_iter_max) < 1:
            raise ValueError("iteration limits must be at least 1")
        if not 0 < self.line_search_shrink < 1:
            raise ValueError("line_search_shrink must lie in (0, 1)")
        if self.far_gain_weight < 0:
            raise ValueError("far_gain_weight must be nonnegative")
        if not self.barrier_mu > 1:
            raise ValueError("barrier_mu must exceed 1")


@dataclass(frozen=True)
class TraceRecord:
    outer: int
    inner: int
    kind: str  # init | mm | power | block | final
    objective: float  # omega_sc at the current (true) point
    eps_bar_sc: float
    eps_tilde_sc: float
    delta_sc: float
    a_c: float
    m: float
    residual: float  # largest relative QoS violation (<= 0 when feasible)
    wall_s: float

    def as_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class Solution:
    point: DesignPoint
    performance: PerformanceTuple
    trace: list[TraceRecord] = field(default_factory=list)
    status: str = "converged"
    method: str = "ao-mm"
    outer_iters: int = 0
    inner_iters_total: int = 0
    eps_cc_gap: float = float("nan")  # |eps_cc - eps_c|
    power_gap: float = float("nan")  # |a_c + a_s - 1|
    uncertified_iterates: int = 0
    wall_s: float = 0.0

    def outer_series(self) -> list[TraceRecord]:
        """One record per completed outer iteration (index 0 is the start point)."""
        return [r for r in self.trace if r.kind in ("init", "power", "block")]
