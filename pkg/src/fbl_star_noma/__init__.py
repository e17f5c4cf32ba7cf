"""Leakage-minimizing design of STAR-RIS assisted two-user NOMA downlinks with
finite-blocklength reliability constraints."""
from __future__ import annotations

__version__ = "0.1.0"

from .channel import ChannelParams, ChannelRealization, SystemGeometry, draw_channel
from .fbl import (
    PerformanceTuple,
    QosRequirements,
    ResourceAllocation,
    StarRisProfile,
    block_error_prob,
    evaluate_performance,
    q_function,
    q_inverse,
)
from .optimizer import InfeasibleError, Solution, SolverConfig, SolverError, optimize

__all__ = [
    "ChannelParams",
    "ChannelRealization",
    "InfeasibleError",
    "PerformanceTuple",
    "QosRequirements",
    "ResourceAllocation",
    "Solution",
    "SolverConfig",
    "SolverError",
    "StarRisProfile",
    "SystemGeometry",
    "__version__",
    "block_error_prob",
    "draw_channel",
    "evaluate_performance",
    "optimize",
    "q_function",
    "q_inverse",
]
