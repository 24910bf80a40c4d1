"""Outer-approximation cuts for rotated second-order cones."""

from __future__ import annotations

import math

from ..ir import LinConstraint, LinExpr


def tangent_cut(cone, values) -> LinConstraint:
    """Supporting hyperplane of ``cone`` taken at the (violating) point ``values``.

    With ``g(x, u, v) = ||(2x, u - v)|| - (u + v)`` convex and positively
    homogeneous, ``grad g(y0) . y <= 0`` holds for every cone point ``y``.
    """
    xs = [values[i] for i in cone.x]
    u = cone.u.value(values)
    v = cone.v.value(values)
    b = u - v
    norm = math.sqrt(4.0 * sum(t * t for t in xs) + b * b)
    if norm < 1e-12:
        # apex region: only u + v >= 0 is informative
        expr = -1.0 * cone.u - cone.v
    else:
        expr = LinExpr.of([(i, 4.0 * t / norm) for i, t in zip(cone.x, xs)])
        expr = expr + (b / norm - 1.0) * cone.u + (-b / norm - 1.0) * cone.v
    return LinConstraint(LinExpr(expr.terms, 0.0), "<=", -expr.constant, f"oa:{cone.name}")


def separate_cone_cuts(values, cones, tol: float = 1e-6) -> list[LinConstraint]:
    """One tangent cut for each cone violated by more than ``tol`` (relative)."""
    cuts = []
    for cone in cones:
        g, scale = cone.residual(values)
        if g > tol * scale:
            cuts.append(tangent_cut(cone, values))
    return cuts

