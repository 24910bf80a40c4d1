"""Decentralized coordination of the two operators."""

from .algorithms import (
    CONVERGED,
    FORWARD,
    NEUTRAL,
    NOT_CONVERGED,
    CoordinationError,
    RunResult,
    admm_run,
    compute_upper_bounds,
    passes_quality_check,
    quality_check_update,
    sdmgs_run,
    upper_bound,
    vils_run,
    z_update,
)
from .central import CentralResult, central_solve, merge_irs
from .params import TRACE_COLUMNS, AlgoParams, CoordinationState, RunTrace, TraceRow
from .subproblem import Subproblem, SubproblemError

__all__ = [
    "CONVERGED",
    "FORWARD",
    "NEUTRAL",
    "NOT_CONVERGED",
    "TRACE_COLUMNS",
    "AlgoParams",
    "CentralResult",
    "CoordinationError",
    "CoordinationState",
    "RunResult",
    "RunTrace",
    "Subproblem",
    "SubproblemError",
    "TraceRow",
    "admm_run",
    "central_solve",
    "compute_upper_bounds",
    "merge_irs",
    "passes_quality_check",
    "quality_check_update",
    "sdmgs_run",
    "upper_bound",
    "vils_run",
    "z_update",
]
