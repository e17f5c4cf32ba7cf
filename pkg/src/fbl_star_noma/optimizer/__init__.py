"""Leakage minimization: MM inner loop, power search and the AO driver."""
from .ao import finalize, initialize, optimize, solve_p5, tighten_near_user
from .model import AuxVariables, DesignPoint, InfeasibleError, Solution, SolverConfig, SolverError, TraceRecord
from .p4 import solve_p4
from .surrogates import rate_gap, surrogate_gain, surrogate_objective

__all__ = [
    "AuxVariables",
    "DesignPoint",
    "InfeasibleError",
    "Solution",
    "SolverConfig",
    "SolverError",
    "TraceRecord",
    "finalize",
    "initialize",
    "optimize",
    "rate_gap",
    "solve_p4",
    "solve_p5",
    "surrogate_gain",
    "surrogate_objective",
    "tighten_near_user",
]
