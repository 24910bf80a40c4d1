"""Centralized reference: both operator models merged into one MICP with explicit consensus.

This is the monolithic problem a single entity with access to both networks
would solve.  It is never used by the decentralized runs; it exists to
cross-check them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..ir import LinConstraint, LinExpr, ProblemIR, QuadTerm, RotatedCone, Sos2Set
from ..solve import SolveOptions, solve


@dataclass
class CentralResult:
    status: str
    objective: float
    bound: float
    x_p: np.ndarray
    x_v: np.ndarray
    boundary: np.ndarray
    nodes: int
    flagged: str = ""


def _shift(e: LinExpr, off: int) -> LinExpr:
    return LinExpr(tuple((v + off, c) for v, c in e.terms), e.constant)


def merge_irs(pdn_ir: ProblemIR, pdn_group: str, tn_ir: ProblemIR, tn_group: str) -> tuple[ProblemIR, int]:
    """Stack the two models and tie their boundary groups with equality rows.

    Returns the merged IR and the id offset of the second model.
    """
    a, b = pdn_ir.boundary[pdn_group], tn_ir.boundary[tn_group]
    if len(a) != len(b):
        raise ValueError(f"boundary sizes differ: {len(a)} vs {len(b)}")
    off = pdn_ir.n
    out = ProblemIR(name=f"{pdn_ir.name}+{tn_ir.name}")
    out.vars = list(pdn_ir.vars) + list(tn_ir.vars)
    out.lin = list(pdn_ir.lin) + [LinConstraint(_shift(r.expr, off), r.sense, r.rhs, r.name) for r in tn_ir.lin]
    out.cones = list(pdn_ir.cones) + [
        RotatedCone(tuple(i + off for i in c.x), _shift(c.u, off), _shift(c.v, off), c.name) for c in tn_ir.cones
    ]
    out.sos2 = list(pdn_ir.sos2) + [Sos2Set(tuple(i + off for i in s.members), s.label) for s in tn_ir.sos2]
    out.obj = pdn_ir.obj + _shift(tn_ir.obj, off)
    out.obj_quad = list(pdn_ir.obj_quad) + [QuadTerm(t.a + off, t.b + off, t.coef) for t in tn_ir.obj_quad]
    for i, j in zip(a, b):
        out.add_lin(LinExpr.of([(i, 1.0), (j + off, -1.0)]), "==", 0.0, "consensus")
    out.boundary = {pdn_group: list(a), tn_group: [j + off for j in b]}
    return out, off


def central_solve(pdn, tn, opts: SolveOptions | None = None) -> CentralResult:
    """Solve the merged problem for two :class:`Subproblem` agents by branch-and-bound."""
    merged, off = merge_irs(pdn.ir, pdn.group, tn.ir, tn.group)
    sol = solve(merged, opts or pdn.opts)
    x = sol.values
    return CentralResult(
        status=sol.status,
        objective=float(sol.objective),
        bound=float(sol.bound),
        x_p=x[:off],
        x_v=x[off:],
        boundary=np.array([x[i] for i in merged.boundary[pdn.group]]) if np.all(np.isfinite(x)) else x[:0],
        nodes=sol.nodes,
        flagged=sol.flagged,
    )
