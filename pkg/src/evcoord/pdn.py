"""Distribution-feeder (P-DSO) subproblem builder.

Branch-flow (DistFlow) model on radial feeders with the nonconvex
``p^2 + q^2 = v*l`` replaced by its convex hull: a rotated cone plus one
linear row.  Power is per-unit on a 1 MVA base (so pu == MW); the EVCS demand
``p_D`` that crosses the operator boundary is expressed in kW.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .ir import LinExpr, ProblemIR, QuadTerm

KW_PER_MW = 1000.0


class TopologyError(ValueError):
    pass


@dataclass(frozen=True)
class PdnNode:
    id: str
    p_load: float = 0.0  # MW
    q_load: float = 0.0  # MVAr
    pv_p: float = 0.0  # MW
    has_evcs: bool = False
    v_min: float = 0.81  # squared pu
    v_max: float = 1.21
    evcs_p_max: float = 5.0  # MW


@dataclass(frozen=True)
class PdnLine:
    from_node: str
    to_node: str
    r: float
    x: float
    ell_max: float
    s_max: float


@dataclass
class PdnCase:
    name: str
    nodes: list
    lines: list
    grid_node: str
    grid_price: float  # $/MWh
    evcs_pf_angle: float = math.acos(0.95)

    def node(self, nid: str) -> PdnNode:
        for n in self.nodes:
            if n.id == nid:
                return n
        raise KeyError(nid)

    @property
    def evcs_nodes(self) -> list[str]:
        return [n.id for n in self.nodes if n.has_evcs]

    def check_radial(self):
        ids = [n.id for n in self.nodes]
        if len(set(ids)) != len(ids):
            raise TopologyError(f"{self.name}: duplicate node ids")
        if self.grid_node not in ids:
            raise TopologyError(f"{self.name}: grid node {self.grid_node!r} missing")
        parents: dict[str, str] = {}
        for ln in self.lines:
            for end in (ln.from_node, ln.to_node):
                if end not in ids:
                    raise TopologyError(f"{self.name}: line references unknown node {end!r}")
            if ln.to_node in parents:
                raise TopologyError(f"{self.name}: node {ln.to_node!r} has two parents")
            if ln.r < 0 or ln.x < 0:
                raise TopologyError(f"{self.name}: negative impedance on {ln.from_node}-{ln.to_node}")
            parents[ln.to_node] = ln.from_node
        if self.grid_node in parents:
            raise TopologyError(f"{self.name}: grid node has a parent")
        for nid in ids:
            seen = set()
            cur = nid
            while cur != self.grid_node:
                if cur in seen or cur not in parents:
                    raise TopologyError(f"{self.name}: node {nid!r} not connected radially to the grid node")
                seen.add(cur)
                cur = parents[cur]
        for n in self.nodes:
            if n.v_min > n.v_max:
                raise TopologyError(f"{self.name}: node {n.id} has v_min > v_max")


@dataclass
class PdnVars:
    """Variable ids of a built PDN problem, keyed by (feeder, element)."""

    p: dict = field(default_factory=dict)  # (feeder, from, to) -> id
    q: dict = field(default_factory=dict)
    ell: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)  # (feeder, node) -> id
    p_grid: dict = field(default_factory=dict)  # feeder -> id
    q_grid: dict = field(default_factory=dict)
    p_evcs: dict = field(default_factory=dict)  # (feeder, node) -> id, kW
    q_evcs: dict = field(default_factory=dict)  # MVAr
    evcs_order: list = field(default_factory=list)


def build_pdn_ir(feeders) -> tuple[ProblemIR, PdnVars]:
    """Build the P-DSO problem for one feeder or a list of independent feeders.

    Boundary group ``p_D`` lists the EVCS demands (kW) feeder by feeder in
    node order.
    """
    if isinstance(feeders, PdnCase):
        feeders = [feeders]
    ir = ProblemIR(name="pdn")
    pv = PdnVars()
    obj = {}
    for case in feeders:
        case.check_radial()
        _build_feeder(ir, pv, case, obj)
    ir.obj = LinExpr.of(obj)
    ir.boundary = {"p_D": [pv.p_evcs[key] for key in pv.evcs_order]}
    return ir, pv


def _build_feeder(ir: ProblemIR, pv: PdnVars, case: PdnCase, obj: dict):
    f = case.name
    for n in case.nodes:
        pv.v[f, n.id] = ir.add_var(n.v_min, n.v_max, name=f"{f}.v[{n.id}]")
    for ln in case.lines:
        key = (f, ln.from_node, ln.to_node)
        tag = f"{ln.from_node}-{ln.to_node}"
        pv.p[key] = ir.add_var(-ln.s_max, ln.s_max, name=f"{f}.p[{tag}]")
        pv.q[key] = ir.add_var(-ln.s_max, ln.s_max, name=f"{f}.q[{tag}]")
        pv.ell[key] = ir.add_var(0.0, ln.ell_max, name=f"{f}.l[{tag}]")

    g_cap = sum(ln.s_max for ln in case.lines if ln.from_node == case.grid_node) or 1.0
    pv.p_grid[f] = ir.add_var(-g_cap, g_cap, name=f"{f}.pG")
    pv.q_grid[f] = ir.add_var(-g_cap, g_cap, name=f"{f}.qG")
    obj[pv.p_grid[f]] = obj.get(pv.p_grid[f], 0.0) + case.grid_price
    tan_d = math.tan(case.evcs_pf_angle)
    for n in case.nodes:
        if n.has_evcs:
            pv.p_evcs[f, n.id] = ir.add_var(0.0, n.evcs_p_max * KW_PER_MW, name=f"{f}.pD[{n.id}]")
            pv.q_evcs[f, n.id] = ir.add_var(-math.inf, math.inf, name=f"{f}.qD[{n.id}]")
            pv.evcs_order.append((f, n.id))
            # reactive EVCS demand follows its power-factor angle
            ir.add_lin(
                LinExpr.of({pv.q_evcs[f, n.id]: 1.0, pv.p_evcs[f, n.id]: -tan_d / KW_PER_MW}),
                "==",
                0.0,
                f"{f}.qD_pf[{n.id}]",
            )

    for ln in case.lines:
        key = (f, ln.from_node, ln.to_node)
        tag = f"{ln.from_node}-{ln.to_node}"
        p, q, ell = pv.p[key], pv.q[key], pv.ell[key]
        vi, vk = pv.v[f, ln.from_node], pv.v[f, ln.to_node]
        z2 = ln.r**2 + ln.x**2
        ir.add_lin(
            LinExpr.of({vi: 1.0, vk: -1.0, p: -2.0 * ln.r, q: -2.0 * ln.x, ell: z2}), "==", 0.0, f"{f}.vdrop[{tag}]"
        )
        ir.add_cone([p, q], LinExpr.const(ln.s_max), LinExpr.const(ln.s_max), f"{f}.smax[{tag}]")
        ir.add_cone([p, q], LinExpr.var(vi), LinExpr.var(ell), f"{f}.hull_cone[{tag}]")
        ni = case.node(ln.from_node)
        s2 = ln.s_max**2
        ir.add_lin(
            LinExpr.of({vi: s2, ell: ni.v_min * ni.v_max}), "<=", s2 * (ni.v_min + ni.v_max), f"{f}.hull_row[{tag}]"
        )

    for n in case.nodes:
        # injection = outgoing flow - (incoming flow net of losses)
        pe, qe = {}, {}
        for ln in case.lines:
            key = (f, ln.from_node, ln.to_node)
            if ln.from_node == n.id:
                pe[pv.p[key]] = pe.get(pv.p[key], 0.0) + 1.0
                qe[pv.q[key]] = qe.get(pv.q[key], 0.0) + 1.0
            if ln.to_node == n.id:
                pe[pv.p[key]] = pe.get(pv.p[key], 0.0) - 1.0
                pe[pv.ell[key]] = pe.get(pv.ell[key], 0.0) + ln.r
                qe[pv.q[key]] = qe.get(pv.q[key], 0.0) - 1.0
                qe[pv.ell[key]] = qe.get(pv.ell[key], 0.0) + ln.x
        if n.id == case.grid_node:
            pe[pv.p_grid[f]] = pe.get(pv.p_grid[f], 0.0) - 1.0
            qe[pv.q_grid[f]] = qe.get(pv.q_grid[f], 0.0) - 1.0
        if n.has_evcs:
            pe[pv.p_evcs[f, n.id]] = 1.0 / KW_PER_MW
            qe[pv.q_evcs[f, n.id]] = 1.0
        ir.add_lin(LinExpr.of(pe), "==", n.pv_p - n.p_load, f"{f}.pbal[{n.id}]")
        ir.add_lin(LinExpr.of(qe), "==", -n.q_load, f"{f}.qbal[{n.id}]")


def attach_augmented_objective(ir: ProblemIR, group: str, lam, z, gamma: float, sign: float) -> ProblemIR:
    """Return a copy whose objective gains ``sign*lam.x + gamma/2 ||x - z||^2`` on boundary group ``group``."""
    ids = ir.boundary[group]
    lam = np.asarray(lam, dtype=float)
    z = np.asarray(z, dtype=float)
    if lam.shape != (len(ids),) or z.shape != (len(ids),):
        raise ValueError(f"expected vectors of length {len(ids)} for group {group!r}")
    if gamma < 0:
        raise ValueError("penalty must be non-negative")
    out = ir.copy()
    terms = dict(out.obj.terms)
    const = out.obj.constant
    quad = list(out.obj_quad)
    for vid, l_i, z_i in zip(ids, lam, z):
        terms[vid] = terms.get(vid, 0.0) + sign * l_i - gamma * z_i
        const += 0.5 * gamma * z_i * z_i
        if gamma > 0:
            quad.append(QuadTerm(vid, vid, 0.5 * gamma))
    out.obj = LinExpr.of(terms, const)
    out.obj_quad = quad
    return out


def attach_augmented_objective_pdn(ir: ProblemIR, lam_p, z, gamma: float) -> ProblemIR:
    """Grid cost ``- lam_p . p_D + gamma/2 ||z - p_D||^2``."""
    return attach_augmented_objective(ir, "p_D", lam_p, z, gamma, -1.0)


def grid_cost(ir_base: ProblemIR, values) -> float:
    """Purchase cost of the un-augmented PDN objective at ``values``."""
    return ir_base.obj.value(values)


def extract_dispatch(values, pv: PdnVars, cases) -> dict:
    """Dispatch in engineering units: MW / MVAr for powers, squared pu for voltages."""
    if isinstance(cases, PdnCase):
        cases = [cases]
    out = {}
    for case in cases:
        f = case.name
        out[f] = {
            "p_grid_mw": float(values[pv.p_grid[f]]),
            "q_grid_mvar": float(values[pv.q_grid[f]]),
            "grid_cost": float(values[pv.p_grid[f]] * case.grid_price),
            "p_evcs_mw": {n: float(values[pv.p_evcs[f, n]] / KW_PER_MW) for (g, n) in pv.evcs_order if g == f},
            "v_sq": {n.id: float(values[pv.v[f, n.id]]) for n in case.nodes},
            "flows": {
                f"{a}-{b}": {
                    "p_mw": float(values[pv.p[f, a, b]]),
                    "q_mvar": float(values[pv.q[f, a, b]]),
                    "l_sq": float(values[pv.ell[f, a, b]]),
                }
                for (g, a, b) in pv.p
                if g == f
            },
        }
    return out


