"""Solvers for :class:`~evcoord.ir.ProblemIR`.

``solve_lp`` and ``solve_qp`` handle continuous problems (cones through
outer-approximation cuts); ``solve_micp_linear`` and ``solve_micp`` run
branch-and-bound over binaries and SOS2 sets.
"""

from __future__ import annotations

import numpy as np

from ..ir import ITERATION_LIMIT, ProblemIR, Solution
from .bnb import BbNode, SolveOptions, branch_and_bound, relax, sos2_split
from .cuts import separate_cone_cuts, tangent_cut
from .kernel import Kernel

__all__ = [
    "BbNode",
    "Kernel",
    "SolveOptions",
    "separate_cone_cuts",
    "solve",
    "solve_continuous",
    "solve_lp",
    "solve_micp",
    "solve_micp_linear",
    "solve_qp",
    "sos2_split",
    "tangent_cut",
]


def solve_continuous(ir: ProblemIR, opts: SolveOptions | None = None, cut_pool: list | None = None) -> Solution:
    """LP or convex QP with cone cuts; binaries and SOS2 must be absent."""
    opts = opts or SolveOptions()
    if ir.binaries() or ir.sos2:
        raise ValueError("continuous solve given binaries or SOS2 sets")
    kernel = Kernel(ir)
    pool = cut_pool if cut_pool is not None else []
    if pool:
        kernel.add_rows(pool)
    status, x, obj, converged = relax(kernel, ir.cones, opts, pool)
    if x is None:
        return Solution(np.full(ir.n, np.nan), np.nan, status)
    if not converged:
        return Solution(x, obj, ITERATION_LIMIT, flagged="cone cuts did not reach tolerance")
    return Solution(x, obj, status, obj)


def solve_lp(ir: ProblemIR, opts: SolveOptions | None = None) -> Solution:
    if ir.binaries() or ir.cones or ir.obj_quad or ir.sos2:
        raise ValueError("solve_lp needs a purely linear continuous problem")
    return solve_continuous(ir, opts)


def solve_qp(ir: ProblemIR, opts: SolveOptions | None = None, cut_pool: list | None = None) -> Solution:
    return solve_continuous(ir, opts, cut_pool)


def solve_micp_linear(ir: ProblemIR, opts: SolveOptions | None = None, cut_pool: list | None = None) -> Solution:
    if ir.obj_quad:
        raise ValueError("solve_micp_linear needs a linear objective")
    return branch_and_bound(ir, opts, cut_pool)


def solve_micp(ir: ProblemIR, opts: SolveOptions | None = None, cut_pool: list | None = None) -> Solution:
    """Branch-and-bound with QP node relaxations when the objective is quadratic."""
    return branch_and_bound(ir, opts, cut_pool)


def solve(ir: ProblemIR, opts: SolveOptions | None = None, cut_pool: list | None = None) -> Solution:
    if ir.binaries() or ir.sos2:
        return branch_and_bound(ir, opts, cut_pool)
    return solve_continuous(ir, opts, cut_pool)

