"""Solver-agnostic intermediate representation for mixed-integer convex programs.

Model builders emit a :class:`ProblemIR`; the routines in :mod:`evcoord.solve`
consume it.  Variables are addressed by dense integer ids.  An IR is treated as
immutable once built: every transformation below returns a copy.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

CONTINUOUS = "continuous"
BINARY = "binary"
SENSES = ("<=", "==", ">=")

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
ITERATION_LIMIT = "iteration_limit"


class IRError(ValueError):
    """Raised when an IR operation receives inconsistent input."""


@dataclass(frozen=True)
class VarSpec:
    lower: float
    upper: float
    kind: str = CONTINUOUS
    name: str = ""

    def __post_init__(self):
        if math.isnan(self.lower) or math.isnan(self.upper):
            raise IRError(f"NaN bound on variable {self.name!r}")
        if self.lower > self.upper:
            raise IRError(f"inverted bounds [{self.lower}, {self.upper}] on {self.name!r}")
        if self.kind not in (CONTINUOUS, BINARY):
            raise IRError(f"unknown variable kind {self.kind!r}")
        if self.kind == BINARY and (self.lower < 0 or self.upper > 1):
            raise IRError(f"binary {self.name!r} with bounds outside [0, 1]")


@dataclass(frozen=True)
class LinExpr:
    """Affine expression ``sum(coef * x[id]) + constant``."""

    terms: tuple = ()
    constant: float = 0.0

    @classmethod
    def of(cls, terms=(), constant: float = 0.0) -> "LinExpr":
        """Build a normalized expression from pairs or a mapping (duplicates summed)."""
        items = terms.items() if isinstance(terms, Mapping) else terms
        acc: dict[int, float] = {}
        for vid, coef in items:
            acc[int(vid)] = acc.get(int(vid), 0.0) + float(coef)
        return cls(tuple(sorted((k, v) for k, v in acc.items() if v != 0.0)), float(constant))

    @classmethod
    def var(cls, vid: int, coef: float = 1.0) -> "LinExpr":
        return cls(((int(vid), float(coef)),), 0.0)

    @classmethod
    def const(cls, value: float) -> "LinExpr":
        return cls((), float(value))

    def __add__(self, other):
        if isinstance(other, (int, float)):
            return LinExpr(self.terms, self.constant + other)
        return LinExpr.of(self.terms + other.terms, self.constant + other.constant)

    __radd__ = __add__

    def __neg__(self):
        return self * -1.0

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, k: float):
        k = float(k)
        if k == 0.0:
            return LinExpr((), 0.0)
        return LinExpr(tuple((v, c * k) for v, c in self.terms), self.constant * k)

    __rmul__ = __mul__

    def value(self, x) -> float:
        return self.constant + sum(c * x[v] for v, c in self.terms)

    def var_ids(self):
        return [v for v, _ in self.terms]


@dataclass(frozen=True)
class LinConstraint:
    expr: LinExpr
    sense: str
    rhs: float
    name: str = ""

    def __post_init__(self):
        if self.sense not in SENSES:
            raise IRError(f"unknown sense {self.sense!r}")

    def violation(self, x) -> float:
        lhs = self.expr.value(x)
        if self.sense == "<=":
            return max(0.0, lhs - self.rhs)
        if self.sense == ">=":
            return max(0.0, self.rhs - lhs)
        return abs(lhs - self.rhs)


@dataclass(frozen=True)
class RotatedCone:
    """``sum(x_i**2) <= u * v`` with ``u, v >= 0`` (enforced by linear bounds elsewhere)."""

    x: tuple
    u: LinExpr
    v: LinExpr
    name: str = ""

    def residual(self, values) -> tuple[float, float]:
        """Return ``(g, scale)`` where ``g > 0`` means violated in second-order form.

        ``g = ||(2x, u - v)|| - (u + v)``; scale is ``max(1, u + v)`` for a relative test.
        """
        xv = np.array([values[i] for i in self.x], dtype=float)
        u = self.u.value(values)
        v = self.v.value(values)
        g = math.sqrt(4.0 * float(xv @ xv) + (u - v) ** 2) - (u + v)
        return g, max(1.0, abs(u) + abs(v))


@dataclass(frozen=True)
class Sos2Set:
    members: tuple
    label: str = ""


@dataclass(frozen=True)
class QuadTerm:
    """Objective contribution ``coef * x[a] * x[b]``."""

    a: int
    b: int
    coef: float


@dataclass
class Solution:
    values: np.ndarray
    objective: float
    status: str
    bound: float = float("nan")
    nodes: int = 0
    flagged: str = ""

    @property
    def ok(self) -> bool:
        return self.status == OPTIMAL


@dataclass
class ProblemIR:
    vars: list = field(default_factory=list)
    lin: list = field(default_factory=list)
    cones: list = field(default_factory=list)
    sos2: list = field(default_factory=list)
    obj: LinExpr = field(default_factory=LinExpr)
    obj_quad: list = field(default_factory=list)
    boundary: dict = field(default_factory=dict)
    name: str = ""

    # -- building -----------------------------------------------------------

    @property
    def n(self) -> int:
        return len(self.vars)

    def add_var(self, lower=0.0, upper=math.inf, kind=CONTINUOUS, name="") -> int:
        """Register a variable and return its dense id."""
        self.vars.append(VarSpec(float(lower), float(upper), kind, name))
        return len(self.vars) - 1

    def add_binary(self, name="") -> int:
        return self.add_var(0.0, 1.0, BINARY, name)

    def add_lin(self, expr: LinExpr, sense: str, rhs: float = 0.0, name: str = "") -> LinConstraint:
        # constants move to the right-hand side
        row = LinConstraint(LinExpr(expr.terms, 0.0), sense, float(rhs) - expr.constant, name)
        self.lin.append(row)
        return row

    def add_cone(self, x: Iterable[int], u: LinExpr, v: LinExpr, name: str = "") -> RotatedCone:
        cone = RotatedCone(tuple(int(i) for i in x), u, v, name)
        self.cones.append(cone)
        return cone

    def add_sos2(self, members: Iterable[int], label: str = "") -> Sos2Set:
        s = Sos2Set(tuple(int(i) for i in members), label)
        self.sos2.append(s)
        return s

    def binaries(self) -> list[int]:
        return [i for i, v in enumerate(self.vars) if v.kind == BINARY]

    def copy(self) -> "ProblemIR":
        return ProblemIR(
            vars=list(self.vars),
            lin=list(self.lin),
            cones=list(self.cones),
            sos2=list(self.sos2),
            obj=self.obj,
            obj_quad=list(self.obj_quad),
            boundary=copy.deepcopy(self.boundary),
            name=self.name,
        )

    def var_named(self, name: str) -> int:
        for i, v in enumerate(self.vars):
            if v.name == name:
                return i
        raise KeyError(name)

    def objective_value(self, x) -> float:
        val = self.obj.value(x)
        for t in self.obj_quad:
            val += t.coef * x[t.a] * x[t.b]
        return float(val)

    # -- checks ---------------------------------------------------------------

    def validate(self) -> list[str]:
        """Return human-readable diagnostics; empty when the IR is well formed."""
        out = []
        n = self.n

        def bad(ids):
            return [i for i in ids if not (0 <= i < n)]

        for k, v in enumerate(self.vars):
            if v.lower > v.upper:
                out.append(f"var {k} ({v.name}): lower > upper")
        for k, row in enumerate(self.lin):
            if b := bad(row.expr.var_ids()):
                out.append(f"lin {k} ({row.name}): unknown vars {b}")
            if any(not math.isfinite(c) for _, c in row.expr.terms) or not math.isfinite(row.rhs):
                out.append(f"lin {k} ({row.name}): non-finite coefficient")
        for k, c in enumerate(self.cones):
            if b := bad(list(c.x) + c.u.var_ids() + c.v.var_ids()):
                out.append(f"cone {k} ({c.name}): unknown vars {b}")
        for k, s in enumerate(self.sos2):
            if len(s.members) < 2:
                out.append(f"sos2 {k} ({s.label}): fewer than 2 members")
            if b := bad(s.members):
                out.append(f"sos2 {k} ({s.label}): unknown vars {b}")
        if b := bad(self.obj.var_ids()):
            out.append(f"objective: unknown vars {b}")
        for t in self.obj_quad:
            if bad([t.a, t.b]):
                out.append(f"quadratic term ({t.a}, {t.b}) references unknown var")
        if self.obj_quad and not _quad_psd(self.obj_quad, n):
            out.append("quadratic objective is not positive semidefinite")
        for label, ids in self.boundary.items():
            if b := bad(ids):
                out.append(f"boundary {label}: unknown vars {b}")
        return out

    def violations(self, x, tol: float = 1e-6, cone_tol: float = 1e-6) -> list[str]:
        """List every constraint of ``self`` that ``x`` violates beyond the tolerances."""
        out = []
        for i, v in enumerate(self.vars):
            if x[i] < v.lower - tol or x[i] > v.upper + tol:
                out.append(f"bound {i} ({v.name}): {x[i]} not in [{v.lower}, {v.upper}]")
            if v.kind == BINARY and min(abs(x[i]), abs(x[i] - 1.0)) > tol:
                out.append(f"binary {i} ({v.name}) fractional: {x[i]}")
        for row in self.lin:
            if (viol := row.violation(x)) > tol:
                out.append(f"row {row.name}: violated by {viol:.3g}")
        for c in self.cones:
            g, scale = c.residual(x)
            if g > cone_tol * scale:
                out.append(f"cone {c.name}: residual {g:.3g}")
        for s in self.sos2:
            if not sos2_ok([x[i] for i in s.members]):
                out.append(f"sos2 {s.label}: non-adjacent support")
        return out

    # -- serialization --------------------------------------------------------

    def to_dict(self) -> dict:
        def expr(e: LinExpr):
            return {"terms": [[v, c] for v, c in e.terms], "constant": e.constant}

        def num(x):
            return x if math.isfinite(x) else ("inf" if x > 0 else "-inf")

        return {
            "name": self.name,
            "vars": [
                {"name": v.name, "lower": num(v.lower), "upper": num(v.upper), "kind": v.kind}
                for v in self.vars
            ],
            "lin": [
                {"name": r.name, "expr": expr(r.expr), "sense": r.sense, "rhs": r.rhs} for r in self.lin
            ],
            "cones": [{"name": c.name, "x": list(c.x), "u": expr(c.u), "v": expr(c.v)} for c in self.cones],
            "sos2": [{"label": s.label, "members": list(s.members)} for s in self.sos2],
            "obj": {"lin": expr(self.obj), "quad": [[t.a, t.b, t.coef] for t in self.obj_quad]},
            "boundary": {k: list(v) for k, v in self.boundary.items()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ProblemIR":
        def expr(e):
            return LinExpr.of([(int(v), float(c)) for v, c in e["terms"]], e.get("constant", 0.0))

        ir = cls(name=d.get("name", ""))
        for v in d["vars"]:
            ir.vars.append(VarSpec(float(v["lower"]), float(v["upper"]), v["kind"], v.get("name", "")))
        for r in d["lin"]:
            ir.lin.append(LinConstraint(expr(r["expr"]), r["sense"], float(r["rhs"]), r.get("name", "")))
        for c in d["cones"]:
            ir.cones.append(RotatedCone(tuple(c["x"]), expr(c["u"]), expr(c["v"]), c.get("name", "")))
        for s in d["sos2"]:
            ir.sos2.append(Sos2Set(tuple(s["members"]), s.get("label", "")))
        ir.obj = expr(d["obj"]["lin"])
        ir.obj_quad = [QuadTerm(int(a), int(b), float(c)) for a, b, c in d["obj"]["quad"]]
        ir.boundary = {k: [int(i) for i in v] for k, v in d.get("boundary", {}).items()}
        return ir

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_json(cls, text: str) -> "ProblemIR":
        return cls.from_dict(json.loads(text))


def sos2_ok(weights, tol: float = 1e-9) -> bool:
    nz = [i for i, w in enumerate(weights) if abs(w) > tol]
    return len(nz) <= 2 and (len(nz) < 2 or nz[1] - nz[0] == 1)


def _quad_psd(terms, n: int) -> bool:
    ids = sorted({t.a for t in terms} | {t.b for t in terms})
    pos = {v: k for k, v in enumerate(ids)}
    Q = np.zeros((len(ids), len(ids)))
    for t in terms:
        Q[pos[t.a], pos[t.b]] += t.coef / 2.0
        Q[pos[t.b], pos[t.a]] += t.coef / 2.0
    return bool(np.linalg.eigvalsh(Q).min() >= -1e-12 * max(1.0, np.abs(Q).max()))


def fix_binaries(ir: ProblemIR, assignment: Mapping[int, int]) -> ProblemIR:
    """Clamp every binary to its assigned value and relabel it continuous.

    The assignment must cover exactly the binaries of ``ir``.
    """
    binaries = set(ir.binaries())
    keys = {int(k) for k in assignment}
    if keys != binaries:
        missing = sorted(binaries - keys)
        extra = sorted(keys - binaries)
        raise IRError(f"assignment mismatch: missing binaries {missing}, non-binary keys {extra}")
    out = ir.copy()
    for vid, val in assignment.items():
        if val not in (0, 1):
            raise IRError(f"binary {vid} assigned {val!r}")
        spec = out.vars[vid]
        out.vars[vid] = VarSpec(float(val), float(val), CONTINUOUS, spec.name)
    return out


def fix_sos2(ir: ProblemIR, segments: Mapping[str, int]) -> ProblemIR:
    """Restrict each labelled SOS2 set to the segment ``(k, k+1)`` and drop the set.

    Sets not named in ``segments`` are kept as SOS2 constraints.
    """
    out = ir.copy()
    keep = []
    for s in out.sos2:
        if s.label not in segments:
            keep.append(s)
            continue
        k = int(segments[s.label])
        if not 0 <= k < len(s.members) - 1:
            raise IRError(f"segment {k} out of range for SOS2 set {s.label!r}")
        for pos, vid in enumerate(s.members):
            if pos not in (k, k + 1):
                spec = out.vars[vid]
                out.vars[vid] = VarSpec(0.0, 0.0, spec.kind, spec.name)
    out.sos2 = keep
    return out


def fix_pattern(ir: ProblemIR, pattern: "Pattern") -> ProblemIR:
    """Apply a combined binary + SOS2 segment pattern."""
    return fix_sos2(fix_binaries(ir, pattern.binaries), pattern.segments)


@dataclass(frozen=True)
class Pattern:
    """An integer decision: binary values plus the active segment of each SOS2 set."""

    binaries: Mapping[int, int]
    segments: Mapping[str, int]

    @classmethod
    def from_values(cls, ir: ProblemIR, x, tol: float = 1e-6) -> "Pattern":
        bins = {}
        for vid in ir.binaries():
            val = x[vid]
            if min(abs(val), abs(val - 1.0)) > tol:
                raise IRError(f"binary {vid} is fractional ({val})")
            bins[vid] = int(round(val))
        segs = {}
        for s in ir.sos2:
            w = [x[i] for i in s.members]
            segs[s.label] = active_segment(w)
        return cls(bins, segs)


def active_segment(weights, tol: float = 1e-9) -> int:
    """Index ``k`` of the adjacent pair ``(k, k+1)`` carrying the weight of an SOS2 vector."""
    nz = [i for i, w in enumerate(weights) if abs(w) > tol]
    if not nz:
        return 0
    if len(nz) > 2 or (len(nz) == 2 and nz[1] - nz[0] != 1):
        raise IRError("weights violate SOS2 adjacency")
    return min(nz[0], len(weights) - 2)
