"""Branch-and-bound over binaries and SOS2 sets, with cone cuts at every node."""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

import numpy as np

from ..ir import (
    INFEASIBLE,
    ITERATION_LIMIT,
    OPTIMAL,
    UNBOUNDED,
    IRError,
    Pattern,
    ProblemIR,
    Solution,
    fix_pattern,
    sos2_ok,
)
from .cuts import separate_cone_cuts
from .kernel import Kernel

SOS2_ZERO = 1e-9


@dataclass(frozen=True)
class SolveOptions:
    tol_feas: float = 1e-6
    tol_opt: float = 1e-6
    max_bb_nodes: int = 20000
    max_cut_rounds: int = 30
    cut_violation_tol: float = 1e-6
    int_tol: float = 1e-6

    def __post_init__(self):
        for name in ("tol_feas", "tol_opt", "cut_violation_tol", "int_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.max_bb_nodes < 1 or self.max_cut_rounds < 1:
            raise ValueError("node and cut-round limits must be >= 1")


@dataclass(frozen=True)
class BbNode:
    id: int
    parent_bound: float
    bound_changes: tuple = ()
    sos2_branch: tuple | None = None

    def __lt__(self, other):
        return (self.parent_bound, self.id) < (other.parent_bound, other.id)


def relax(kernel: Kernel, cones, opts: SolveOptions, pool: list | None = None):
    """Solve the kernel, adding tangent cuts until every cone is satisfied.

    Returns ``(status, x, objective, cones_converged)``.  Cuts are globally
    valid, so they stay in the kernel and are appended to ``pool``.
    """
    rounds = 0
    while True:
        status, x, obj = kernel.solve()
        if status != OPTIMAL or not cones:
            return status, x, obj, True
        cuts = separate_cone_cuts(x, cones, opts.cut_violation_tol)
        if not cuts:
            return status, x, obj, True
        if rounds >= opts.max_cut_rounds:
            return status, x, obj, False
        kernel.add_rows(cuts)
        if pool is not None:
            pool.extend(cuts)
        rounds += 1


def _gap(opts, incumbent):
    return opts.tol_opt * max(1.0, abs(incumbent))


def _pick_binary(x, binaries, int_tol):
    best, best_frac = None, int_tol
    for vid in binaries:
        frac = min(x[vid] - math.floor(x[vid]), math.ceil(x[vid]) - x[vid])
        if frac > best_frac:
            best, best_frac = vid, frac
    return best


def _sos2_violation(w):
    total = float(np.sum(np.abs(w)))
    pair = max(abs(w[i]) + abs(w[i + 1]) for i in range(len(w) - 1))
    return total - pair


def _pick_sos2(x, sets):
    best, best_v = None, -1.0
    for k, s in enumerate(sets):
        w = np.array([x[i] for i in s.members])
        if sos2_ok(w, SOS2_ZERO):
            continue
        v = _sos2_violation(w)
        if v > best_v:
            best, best_v = k, v
    return best


def sos2_split(weights) -> int:
    """Split index at the weighted-average breakpoint, kept strictly inside the support."""
    w = np.abs(np.asarray(weights, dtype=float))
    nz = np.flatnonzero(w > SOS2_ZERO)
    lo, hi = int(nz[0]), int(nz[-1])
    r = float(np.dot(np.arange(len(w)), w) / w.sum())
    return int(min(max(round(r), lo + 1), hi - 1))


def branch_and_bound(ir: ProblemIR, opts: SolveOptions | None = None, cut_pool: list | None = None) -> Solution:
    """Best-bound branch-and-bound; node relaxations are LPs or convex QPs."""
    opts = opts or SolveOptions()
    kernel = Kernel(ir)
    pool = cut_pool if cut_pool is not None else []
    if pool:
        kernel.add_rows(pool)
    base_lo, base_hi = kernel.lower.copy(), kernel.upper.copy()
    binaries = ir.binaries()

    heap = [BbNode(0, -math.inf)]
    next_id = 1
    inc_x, inc_obj = None, math.inf
    nodes = 0
    flags = []
    unconverged = False

    while heap:
        node = heapq.heappop(heap)
        if node.parent_bound >= inc_obj - _gap(opts, inc_obj):
            continue
        if nodes >= opts.max_bb_nodes:
            heapq.heappush(heap, node)
            flags.append("node limit reached")
            break
        nodes += 1
        lo, hi = base_lo.copy(), base_hi.copy()
        for vid, a, b in node.bound_changes:
            lo[vid], hi[vid] = max(lo[vid], a), min(hi[vid], b)
        if np.any(lo > hi):
            continue
        kernel.set_bounds(lo, hi)
        status, x, obj, converged = relax(kernel, ir.cones, opts, pool)
        if status == INFEASIBLE:
            continue
        if status == UNBOUNDED:
            if node.id == 0:
                return Solution(np.full(ir.n, np.nan), -math.inf, UNBOUNDED, -math.inf, nodes)
            continue
        if status != OPTIMAL:
            flags.append(f"node {node.id}: relaxation {status}")
            continue
        if obj >= inc_obj - _gap(opts, inc_obj):
            continue

        vid = _pick_binary(x, binaries, opts.int_tol)
        if vid is not None:
            for val in (0.0, 1.0):
                heapq.heappush(heap, BbNode(next_id, obj, node.bound_changes + ((vid, val, val),)))
                next_id += 1
            continue
        k = _pick_sos2(x, ir.sos2)
        if k is not None:
            members = ir.sos2[k].members
            split = sos2_split([x[i] for i in members])
            left = tuple((members[p], 0.0, 0.0) for p in range(split + 1, len(members)))
            right = tuple((members[p], 0.0, 0.0) for p in range(split))
            for side, changes in (("L", left), ("R", right)):
                heapq.heappush(
                    heap, BbNode(next_id, obj, node.bound_changes + changes, (ir.sos2[k].label, split, side))
                )
                next_id += 1
            continue
        inc_x, inc_obj = x, obj
        unconverged = not converged

    if inc_x is None:
        if flags:
            return Solution(np.full(ir.n, np.nan), math.nan, ITERATION_LIMIT, math.nan, nodes, "; ".join(flags))
        return Solution(np.full(ir.n, np.nan), math.nan, INFEASIBLE, math.inf, nodes)

    bound = min([inc_obj] + [n.parent_bound for n in heap])
    x, obj = _polish(ir, inc_x, inc_obj, opts, pool)
    status = OPTIMAL if not heap else ITERATION_LIMIT
    if unconverged:
        flags.append("cone cuts did not reach tolerance at incumbent")
    return Solution(x, obj, status, bound, nodes, "; ".join(flags))


def _polish(ir, x, obj, opts, pool):
    """Re-solve with the incumbent's pattern fixed so binaries and SOS2 zeros are exact."""
    if not ir.binaries() and not ir.sos2:
        return x, obj
    try:
        fixed = fix_pattern(ir, Pattern.from_values(ir, x, opts.int_tol))
    except IRError:
        return x, obj
    kernel = Kernel(fixed)
    if pool:
        kernel.add_rows(pool)
    status, xp, objp, _ = relax(kernel, fixed.cones, opts, pool)
    if status != OPTIMAL:
        return x, obj
    return xp, objp
