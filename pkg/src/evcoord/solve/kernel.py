"""Continuous LP/QP kernel over a compiled :class:`ProblemIR`.

The kernel wraps one persistent HiGHS instance so that branch-and-bound nodes
and cutting-plane rounds reuse the previous basis.  Integrality and SOS2 are
ignored here; cones are ignored too (callers add outer-approximation rows).

Separable quadratic objectives (``c * x**2`` terms only, which is all the
augmented Lagrangians produce) are handled as LPs: each square gets an
epigraph column refined with tangent cuts inside :meth:`Kernel.solve`.  The
HiGHS active-set QP solver was found to cycle on these badly scaled problems
(tiny penalty next to large linear costs).  A non-separable Hessian still goes
to the HiGHS QP solver, under an iteration limit.
"""

from __future__ import annotations

import highspy
import numpy as np
from scipy import sparse
from scipy.sparse import linalg as spla

from ..ir import INFEASIBLE, ITERATION_LIMIT, OPTIMAL, UNBOUNDED, LinConstraint, ProblemIR

INF = highspy.kHighsInf
EPI_ROUNDS = 200
EPI_RTOL = 1e-10
QP_ITERATION_LIMIT = 200000

_STATUS = {
    highspy.HighsModelStatus.kOptimal: OPTIMAL,
    highspy.HighsModelStatus.kInfeasible: INFEASIBLE,
    highspy.HighsModelStatus.kUnbounded: UNBOUNDED,
}


def _clip_inf(a):
    a = np.asarray(a, dtype=float).copy()
    a[a >= 1e30] = INF
    a[a <= -1e30] = -INF
    return a


def row_bounds(row: LinConstraint):
    if row.sense == "<=":
        return -INF, row.rhs
    if row.sense == ">=":
        return row.rhs, INF
    return row.rhs, row.rhs


class Kernel:
    """Persistent relaxation solver for one IR (binaries relaxed to [0, 1])."""

    def __init__(self, ir: ProblemIR, use_quad: bool = True):
        self.n = ir.n
        self.lower = _clip_inf([v.lower for v in ir.vars])
        self.upper = _clip_inf([v.upper for v in ir.vars])
        self.cost = np.zeros(self.n)
        for vid, c in ir.obj.terms:
            self.cost[vid] += c
        self.offset = ir.obj.constant

        rows, cols, vals = [], [], []
        lo, hi = [], []
        for r, row in enumerate(ir.lin):
            for vid, c in row.expr.terms:
                rows.append(r)
                cols.append(vid)
                vals.append(c)
            a, b = row_bounds(row)
            lo.append(a)
            hi.append(b)
        A = sparse.csc_matrix((vals, (rows, cols)), shape=(len(ir.lin), self.n))
        A.sort_indices()

        h = highspy.Highs()
        h.setOptionValue("output_flag", False)
        h.setOptionValue("threads", 1)
        h.setOptionValue("random_seed", 0)
        h.setOptionValue("presolve", "off")
        lp = highspy.HighsLp()
        lp.num_col_ = self.n
        lp.num_row_ = len(ir.lin)
        lp.col_cost_ = self.cost
        lp.col_lower_ = self.lower
        lp.col_upper_ = self.upper
        lp.row_lower_ = _clip_inf(lo)
        lp.row_upper_ = _clip_inf(hi)
        lp.offset_ = self.offset
        lp.a_matrix_.format_ = highspy.MatrixFormat.kColwise
        lp.a_matrix_.start_ = A.indptr.astype(np.int32)
        lp.a_matrix_.index_ = A.indices.astype(np.int32)
        lp.a_matrix_.value_ = A.data.astype(float)
        h.passModel(lp)
        self.h = h
        self.num_rows = len(ir.lin)
        self.epi = []  # (var id, epigraph column, coefficient)
        self.quadratic = bool(use_quad and ir.obj_quad)
        if self.quadratic:
            if all(t.a == t.b for t in ir.obj_quad):
                self._add_epigraphs(ir)
            else:
                h.setOptionValue("qp_iteration_limit", QP_ITERATION_LIMIT)
                self._pass_hessian(ir)

    def _add_epigraphs(self, ir):
        coef = {}
        for t in ir.obj_quad:
            coef[t.a] = coef.get(t.a, 0.0) + t.coef
        for vid, c in sorted(coef.items()):
            if c == 0.0:
                continue
            col = self.n + len(self.epi)
            self.h.addCol(c, 0.0, INF, 0, np.array([], dtype=np.int32), np.array([], dtype=float))
            self.epi.append((vid, col, c))
            lo, hi = self.lower[vid], self.upper[vid]
            pts = [p for p in (lo, hi) if np.isfinite(p)]
            if len(pts) == 2:
                pts.append(0.5 * (lo + hi))
            elif len(pts) == 1:
                pts.append(pts[0] + (1e4 if pts[0] == lo else -1e4))
            else:
                pts = [-1e4, 0.0, 1e4]
            for p in pts:
                self._tangent(vid, col, p)

    def _tangent(self, vid, col, p):
        # s >= x^2  supported at p:  s - 2 p x >= -p^2
        self.h.addRow(-p * p, INF, 2, np.array([col, vid], dtype=np.int32), np.array([1.0, -2.0 * p]))
        self.num_rows += 1

    def _pass_hessian(self, ir):
        # HiGHS minimises c'x + 1/2 x'Qx with Q given as its lower triangle
        Q = sparse.lil_matrix((self.n, self.n))
        for t in ir.obj_quad:
            if t.a == t.b:
                Q[t.a, t.a] += 2.0 * t.coef
            else:
                i, j = max(t.a, t.b), min(t.a, t.b)
                Q[i, j] += t.coef
        Q = sparse.csc_matrix(Q)
        Q.sort_indices()
        hess = highspy.HighsHessian()
        hess.dim_ = self.n
        hess.format_ = highspy.HessianFormat.kTriangular
        hess.start_ = Q.indptr.astype(np.int32)
        hess.index_ = Q.indices.astype(np.int32)
        hess.value_ = Q.data.astype(float)
        self.h.passHessian(hess)

    def set_bounds(self, lower, upper):
        idx = np.arange(self.n, dtype=np.int32)
        self.h.changeColsBounds(self.n, idx, _clip_inf(lower), _clip_inf(upper))

    def add_rows(self, rows):
        for row in rows:
            ids = np.array([v for v, _ in row.expr.terms], dtype=np.int32)
            coefs = np.array([c for _, c in row.expr.terms], dtype=float)
            lo, hi = row_bounds(row)
            self.h.addRow(lo, hi, len(ids), ids, coefs)
            self.num_rows += 1

    def set_cost(self, cost, offset=None):
        cost = np.asarray(cost, dtype=float)
        self.h.changeColsCost(self.n, np.arange(self.n, dtype=np.int32), cost)
        if offset is not None:
            self.h.changeObjectiveOffset(float(offset))

    def solve(self):
        """Return ``(status, x, objective)``; ``x`` covers the model columns only."""
        for _ in range(EPI_ROUNDS):
            status, x, obj = self._run()
            if status != OPTIMAL or not self.epi:
                return status, (None if x is None else x[: self.n]), obj
            gaps = [(c * (x[vid] ** 2 - x[col]), vid, col, x[vid]) for vid, col, c in self.epi]
            tol = EPI_RTOL * max(1.0, abs(obj))
            open_ = [g for g in gaps if g[0] > tol]
            if not open_:
                break
            for _, vid, col, p in open_:
                self._tangent(vid, col, p)
        xs = self._polish(x)
        quad = sum(c * xs[vid] ** 2 for vid, _, c in self.epi)
        # report the true objective, not its outer approximation
        return OPTIMAL, xs, float(self.h.getLp().col_cost_[: self.n] @ xs + self.h.getLp().offset_ + quad)

    def _polish(self, x):
        """Exact step on the active set of the final epigraph LP.

        Tangent rows pin each squared variable only up to the row tolerance,
        and nearly parallel tangents make that pinning ill-conditioned.  The
        equality-constrained QP over the rows and bounds active in the LP basis
        is solved directly; the result is accepted as far along the segment
        from ``x`` as stays feasible, which can only lower a convex objective.
        """
        n = self.n
        x0 = x[:n].copy()
        lp = self.h.getLp()
        basis = self.h.getBasis()
        if not basis.valid:
            return x0
        A = sparse.csc_matrix(
            (lp.a_matrix_.value_, lp.a_matrix_.index_, lp.a_matrix_.start_), shape=(lp.num_row_, lp.num_col_)
        )
        tangent = np.zeros(lp.num_row_, dtype=bool)
        if lp.num_col_ > n:
            tangent[np.unique(A[:, n:].indices)] = True
        A = sparse.csr_matrix(A[:, :n])
        basic = highspy.HighsBasisStatus.kBasic
        # each index into the bound vectors copies them whole; convert once
        col_status, row_status = list(basis.col_status), list(basis.row_status)
        free = np.array([st == basic for st in col_status[:n]])
        active = np.array([st != basic for st in row_status], dtype=bool) & ~tangent
        if not free.any():
            return x0
        q = np.zeros(n)
        for vid, _, c in self.epi:
            q[vid] += c
        cost = np.asarray(lp.col_cost_[:n], dtype=float)
        F = np.flatnonzero(free)
        R = np.flatnonzero(active)
        A_R = A[R]
        rhs = A_R @ x0 - A_R[:, F] @ x0[F]
        target = A_R @ x0  # active rows keep their current activity
        B = A_R[:, F]
        K = sparse.bmat([[sparse.diags(2.0 * q[F]), B.T], [B, None]], format="csc")
        with np.errstate(all="ignore"):
            try:
                sol = spla.spsolve(K, np.concatenate([-cost[F], target - rhs]))
            except (RuntimeError, ValueError):
                return x0
        if not np.all(np.isfinite(sol)):
            return x0
        d = np.zeros(n)
        d[F] = sol[: len(F)] - x0[F]
        if not np.any(d):
            return x0
        t = self._max_step(A, tangent, lp, x0, d)
        return x0 + t * d

    def _max_step(self, A, tangent, lp, x0, d):
        # largest t in [0, 1] keeping rows and bounds within their (current) limits
        t = 1.0
        lo = np.asarray(lp.col_lower_[: self.n])
        hi = np.asarray(lp.col_upper_[: self.n])
        rows = ~tangent
        r0, dr = A[rows] @ x0, A[rows] @ d
        rlo = np.asarray(lp.row_lower_)[rows]
        rhi = np.asarray(lp.row_upper_)[rows]
        for val, step, a, b in ((x0, d, lo, hi), (r0, dr, rlo, rhi)):
            slack_tol = 1e-9 * (1.0 + np.abs(val))
            up = step > 1e-15
            dn = step < -1e-15
            with np.errstate(all="ignore"):
                if up.any():
                    lim = (b[up] - val[up] + slack_tol[up]) / step[up]
                    t = min(t, float(np.min(np.where(np.isfinite(lim), lim, np.inf))))
                if dn.any():
                    lim = (a[dn] - val[dn] - slack_tol[dn]) / step[dn]
                    t = min(t, float(np.min(np.where(np.isfinite(lim), lim, np.inf))))
        return max(t, 0.0)

    def _run(self):
        h = self.h
        h.run()
        status = h.getModelStatus()
        if status == highspy.HighsModelStatus.kUnboundedOrInfeasible:
            # dual simplex cannot tell which; primal simplex can
            h.setOptionValue("simplex_strategy", 4)
            h.run()
            h.setOptionValue("simplex_strategy", 1)
            status = h.getModelStatus()
        if status not in _STATUS:
            # numerical trouble from a stale basis: retry cold, then with presolve
            for opt, val in (("presolve", "off"), ("presolve", "on")):
                h.setOptionValue(opt, val)
                h.clearSolver()
                h.run()
                status = h.getModelStatus()
                if status in _STATUS:
                    break
            h.setOptionValue("presolve", "off")
        name = _STATUS.get(status, ITERATION_LIMIT)
        if name != OPTIMAL:
            return name, None, np.nan
        x = np.array(h.getSolution().col_value, dtype=float)
        return OPTIMAL, x, float(h.getInfo().objective_function_value)
