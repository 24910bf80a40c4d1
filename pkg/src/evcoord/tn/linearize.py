"""Linearization helpers: SOS2 piecewise-linear curves, binary products, Big-M equilibrium rows."""

from __future__ import annotations

import math

import numpy as np

from ..ir import LinExpr, ProblemIR


def bpr_time(x, t0: float, cap: float):
    return t0 * (1.0 + 0.15 * (np.asarray(x, dtype=float) / cap) ** 4)


def bpr_breakpoints(t0: float, cap: float, x_max: float, segments: int):
    if segments < 1 or x_max <= 0:
        raise ValueError("need segments >= 1 and x_max > 0")
    xs = np.linspace(0.0, x_max, segments + 1)
    return xs, bpr_time(xs, t0, cap)


def add_pwl(ir: ProblemIR, x: LinExpr, y: LinExpr, xs, ys, label: str):
    """Tie ``y`` to the piecewise-linear interpolant of ``(xs, ys)`` at ``x`` through SOS2 weights."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if len(xs) < 2 or len(xs) != len(ys):
        raise ValueError(f"{label}: need at least two matching breakpoints")
    if np.any(np.diff(xs) <= 0):
        raise ValueError(f"{label}: breakpoints must increase")
    w = [ir.add_var(0.0, 1.0, name=f"{label}.w[{n}]") for n in range(len(xs))]
    rows = [
        ir.add_lin(x - LinExpr.of(zip(w, xs)), "==", 0.0, f"{label}.x"),
        ir.add_lin(y - LinExpr.of(zip(w, ys)), "==", 0.0, f"{label}.y"),
        ir.add_lin(LinExpr.of((i, 1.0) for i in w), "==", 1.0, f"{label}.sum"),
    ]
    return rows, ir.add_sos2(w, label)


def pwl_bpr(ir: ProblemIR, x_var: int, t_var: int, t0: float, cap: float, x_max: float, segments: int, label: str):
    """BPR travel time on uniform breakpoints over ``[0, x_max]``."""
    xs, ts = bpr_breakpoints(t0, cap, x_max, segments)
    return add_pwl(ir, LinExpr.var(x_var), LinExpr.var(t_var), xs, ts, label)


def bpr_max_error(t0: float, cap: float, x_max: float, segments: int, samples: int = 1000) -> float:
    """Largest gap between the interpolant and the exact curve on a uniform grid."""
    xs, ts = bpr_breakpoints(t0, cap, x_max, segments)
    grid = np.linspace(0.0, x_max, samples)
    return float(np.max(np.abs(np.interp(grid, xs, ts) - bpr_time(grid, t0, cap))))


def binary_product(ir: ProblemIR, b: int, y: int, lo: float, hi: float, label: str) -> int:
    """Exact envelope for ``w = b*y`` with binary ``b`` and ``y`` in ``[lo, hi]``."""
    w = ir.add_var(min(lo, 0.0), max(hi, 0.0), name=label)
    W, B, Y = LinExpr.var(w), LinExpr.var(b), LinExpr.var(y)
    ir.add_lin(W - hi * B, "<=", 0.0, f"{label}.ub")
    ir.add_lin(W - lo * B, ">=", 0.0, f"{label}.lb")
    ir.add_lin(W - Y - lo * B, "<=", -lo, f"{label}.ub2")
    ir.add_lin(W - Y - hi * B, ">=", -hi, f"{label}.lb2")
    return w


def square_breakpoints(lo: float, hi: float, step: float):
    """Multiples of ``step`` covering ``[lo, hi]``; every grid shares the lattice ``step * Z``."""
    k_lo = math.floor(lo / step + 1e-9)
    k_hi = math.ceil(hi / step - 1e-9)
    return step * np.arange(k_lo, k_hi + 1, dtype=float)


def product_pwl(ir: ProblemIR, f: int, e: int, f_hi: float, e_hi: float, n_bp: int, label: str):
    """``w ~ f*e`` for ``f`` in ``[0, f_hi]``, ``e`` in ``[0, e_hi]`` via ((f+e)/2)^2 - ((f-e)/2)^2.

    Both squares are interpolated on the same lattice, so their chord errors
    cancel whenever ``f = 0`` or ``e = 0`` and the product is then exact.  The
    first square gets ``n_bp`` breakpoints; the second covers its range on the
    same spacing, which may take one or two more.  Returns ``(w, tolerance)``
    with ``|w - f*e| <= tolerance`` at any SOS2-feasible point.
    """
    if n_bp < 2:
        raise ValueError("need at least two breakpoints per square")
    if not (np.isfinite(f_hi) and np.isfinite(e_hi)):
        raise ValueError(f"{label}: product factors need finite bounds")
    if f_hi + e_hi <= 0:
        raise ValueError(f"{label}: product factors have an empty range")
    step = _product_step(f_hi, e_hi, n_bp)
    s1 = square_breakpoints(0.0, 0.5 * (f_hi + e_hi), step)
    s2 = square_breakpoints(-0.5 * e_hi, 0.5 * f_hi, step)
    sq1 = ir.add_var(0.0, s1[-1] ** 2, name=f"{label}.sq1")
    sq2 = ir.add_var(0.0, max(s2[0] ** 2, s2[-1] ** 2), name=f"{label}.sq2")
    half = LinExpr.of({f: 0.5, e: 0.5})
    diff = LinExpr.of({f: 0.5, e: -0.5})
    add_pwl(ir, half, LinExpr.var(sq1), s1, s1**2, f"{label}.s1")
    add_pwl(ir, diff, LinExpr.var(sq2), s2, s2**2, f"{label}.s2")
    tol = product_tolerance(f_hi, e_hi, n_bp)
    w = ir.add_var(-tol, f_hi * e_hi + tol, name=label)
    ir.add_lin(LinExpr.of({w: 1.0, sq1: -1.0, sq2: 1.0}), "==", 0.0, f"{label}.def")
    return w, tol


def _product_step(f_hi: float, e_hi: float, n_bp: int) -> float:
    return 0.5 * (f_hi + e_hi) / (n_bp - 1)


def product_tolerance(f_hi: float, e_hi: float, n_bp: int) -> float:
    # the chord of x^2 over a cell of width h overshoots by at most h^2/4, and
    # both squares overshoot (never undershoot), so their difference errs by at most that
    h = _product_step(f_hi, e_hi, n_bp)
    return h * h / 4.0


def linearize_ue(ir: ProblemIR, flows, nus, costs, eq_cost: int, demand: float, big_m, label: str):
    """Big-M complementarity between path flow and path cost excess for one O-D pair."""
    rows = []
    for k, (f, nu, c, m) in enumerate(zip(flows, nus, costs, big_m)):
        rows.append(ir.add_lin(LinExpr.of({f: 1.0, nu: -demand}), "<=", 0.0, f"{label}.use[{k}]"))
        rows.append(ir.add_lin(LinExpr.of({c: 1.0, eq_cost: -1.0}), ">=", 0.0, f"{label}.min[{k}]"))
        rows.append(ir.add_lin(LinExpr.of({c: 1.0, eq_cost: -1.0, nu: m}), "<=", m, f"{label}.eq[{k}]"))
    return rows
