"""Transportation-network (TNC) subproblem: EV routing and charging at user equilibrium.

Path-based formulation.  Boundary quantity ``p_T`` is the charging power drawn
at each station in kW (veh * kWh over a one-hour period).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..ir import LinExpr, ProblemIR
from ..pdn import attach_augmented_objective
from .linearize import binary_product, bpr_time, linearize_ue, product_pwl, pwl_bpr
from .paths import PathSet, enumerate_paths

MIN_PER_HOUR = 60.0


class TnCaseError(ValueError):
    pass


@dataclass(frozen=True)
class TnNode:
    id: str
    has_evcs: bool = False
    b_max: float = 0.0  # kWh per vehicle
    pile_power: float = 150.0  # kW
    wait_base: float = 10.0  # min
    congestion: float = 0.2  # min/veh
    price: float = 0.0  # $/kWh
    p_max: float = math.inf  # kW


@dataclass(frozen=True)
class TnArc:
    from_node: str
    to_node: str
    t0: float  # min
    capacity: float  # veh/min
    length: float  # miles


@dataclass(frozen=True)
class OdPair:
    origin: str
    dest: str
    demand: float
    e_max: float = 60.0
    e_min: float = 6.0
    e_0: float = 30.0
    beta: float = 0.3  # kWh/mile
    anxiety: float = 0.1


@dataclass
class TnCase:
    name: str
    nodes: list
    arcs: list
    od_pairs: list
    time_value: float = 0.5  # $/min

    def node(self, nid: str) -> TnNode:
        for n in self.nodes:
            if n.id == nid:
                return n
        raise KeyError(nid)

    def arc(self, a: str, b: str) -> TnArc:
        for arc in self.arcs:
            if arc.from_node == a and arc.to_node == b:
                return arc
        raise KeyError((a, b))

    @property
    def evcs_nodes(self) -> list[str]:
        return [n.id for n in self.nodes if n.has_evcs]

    def check(self):
        ids = [n.id for n in self.nodes]
        if len(set(ids)) != len(ids):
            raise TnCaseError(f"{self.name}: duplicate node ids")
        seen = set()
        for a in self.arcs:
            key = (a.from_node, a.to_node)
            if key in seen:
                raise TnCaseError(f"{self.name}: duplicate arc {key}")
            seen.add(key)
            if a.from_node not in ids or a.to_node not in ids:
                raise TnCaseError(f"{self.name}: arc {key} references an unknown node")
            if a.t0 < 0 or a.capacity <= 0 or a.length < 0:
                raise TnCaseError(f"{self.name}: arc {key} has invalid parameters")
        for od in self.od_pairs:
            if od.demand < 0:
                raise TnCaseError(f"{self.name}: negative demand on {od.origin}->{od.dest}")
            if not od.e_min <= od.e_0 <= od.e_max:
                raise TnCaseError(f"{self.name}: need E_min <= E_0 <= E_max on {od.origin}->{od.dest}")
            if not 0.0 <= od.anxiety < 1.0:
                raise TnCaseError(f"{self.name}: range-anxiety fraction must lie in [0, 1)")
        for n in self.nodes:
            if n.has_evcs and (n.pile_power <= 0 or n.b_max < 0):
                raise TnCaseError(f"{self.name}: station {n.id} has invalid parameters")


@dataclass
class PwlConfig:
    bpr_segments: int = 8
    bpr_span: float = 2.0  # x_max as a multiple of capacity
    coupling_breakpoints: int = 8

    def __post_init__(self):
        if self.bpr_segments < 1 or self.coupling_breakpoints < 2 or self.bpr_span <= 0:
            raise ValueError("invalid piecewise-linear settings")


@dataclass
class TnVars:
    flow: dict = field(default_factory=dict)  # path index -> id
    use: dict = field(default_factory=dict)  # path index -> binary id
    path_cost: dict = field(default_factory=dict)
    energy: dict = field(default_factory=dict)  # (path, node) -> id
    charge: dict = field(default_factory=dict)  # (path, station) -> id, kWh
    charging: dict = field(default_factory=dict)  # (path, station) -> binary id
    product: dict = field(default_factory=dict)  # (path, station) -> id of f*E
    eq_cost: dict = field(default_factory=dict)  # od -> id
    arc_flow: dict = field(default_factory=dict)  # (a, b) -> id
    arc_time: dict = field(default_factory=dict)
    node_flow: dict = field(default_factory=dict)  # station -> id
    node_time: dict = field(default_factory=dict)
    p_t: dict = field(default_factory=dict)  # station -> id, kW
    coupling_tol: float = 0.0  # bound on |p_T - sum f*E| per station
    big_m: dict = field(default_factory=dict)  # path index -> M


def _charge_cap(case: TnCase, od: OdPair, nid: str) -> float:
    # cannot exceed the station limit, nor the room left above the range-anxiety floor
    return max(0.0, min(case.node(nid).b_max, od.e_max * (1.0 - od.anxiety)))


def build_tn_ir(case: TnCase, paths: PathSet | None = None, pwl: PwlConfig | None = None):
    """Build the TNC problem.  Returns ``(ir, TnVars, PathSet)``."""
    case.check()
    pwl = pwl or PwlConfig()
    paths = paths if paths is not None else enumerate_paths(case)
    ir = ProblemIR(name="tn")
    tv = TnVars()
    w = case.time_value
    evcs = set(case.evcs_nodes)

    # arcs: flow and piecewise-linear BPR time
    incidence = paths.arc_incidence()
    arc_tmax = {}
    for a, qs in sorted(incidence.items()):
        arc = case.arc(*a)
        x_max = pwl.bpr_span * arc.capacity
        tag = f"{a[0]}-{a[1]}"
        tv.arc_flow[a] = ir.add_var(0.0, x_max, name=f"x[{tag}]")
        arc_tmax[a] = float(bpr_time(x_max, arc.t0, arc.capacity))
        tv.arc_time[a] = ir.add_var(arc.t0, arc_tmax[a], name=f"t[{tag}]")
        pwl_bpr(ir, tv.arc_flow[a], tv.arc_time[a], arc.t0, arc.capacity, x_max, pwl.bpr_segments, f"bpr[{tag}]")

    # per path: flow, use binary, energy bookkeeping and charging stops
    stops: dict[int, list] = {}
    for qi, p in enumerate(paths.paths):
        od = case.od_pairs[p.od]
        tv.flow[qi] = ir.add_var(0.0, od.demand, name=f"f[{p.label}]")
        tv.use[qi] = ir.add_binary(name=f"nu[{p.label}]")
        stops[qi] = [n for n in p.nodes[1:-1] if n in evcs and _charge_cap(case, od, n) > 0]
        for j, n in enumerate(p.nodes):
            lo, hi = (od.e_0, od.e_0) if j == 0 else (od.e_min, od.e_max)
            tv.energy[qi, n] = ir.add_var(lo, hi, name=f"e[{p.label}@{n}]")
        for n in stops[qi]:
            tv.charge[qi, n] = ir.add_var(0.0, _charge_cap(case, od, n), name=f"E[{p.label}@{n}]")
            tv.charging[qi, n] = ir.add_binary(name=f"g[{p.label}@{n}]")
        for prev, n in p.arcs:
            drain = case.arc(prev, n).length * od.beta
            e_prev, e_n = tv.energy[qi, prev], tv.energy[qi, n]
            row = {e_n: 1.0, e_prev: -1.0}
            if (qi, n) in tv.charge:
                row[tv.charge[qi, n]] = -1.0
            ir.add_lin(LinExpr.of(row), "==", -drain, f"energy[{p.label}:{prev}-{n}]")
            ir.add_lin(LinExpr.var(e_prev), ">=", drain + od.anxiety * od.e_max, f"anxiety[{p.label}:{prev}-{n}]")
        for n in stops[qi]:
            E, g, e = tv.charge[qi, n], tv.charging[qi, n], tv.energy[qi, n]
            ir.add_lin(LinExpr.of({E: 1.0, g: -od.e_max}), "<=", 0.0, f"chg_on[{p.label}@{n}]")
            ir.add_lin(LinExpr.of({g: od.e_max, e: -1.0}), "<=", 0.0, f"chg_full[{p.label}@{n}]")

    # stations: node flow x_m = sum f*g (exact), wait time t_m, boundary power
    node_flow_terms: dict[str, dict] = {m: {} for m in case.evcs_nodes}
    station_flow_max = {m: 0.0 for m in case.evcs_nodes}
    for qi, p in enumerate(paths.paths):
        od = case.od_pairs[p.od]
        for n in stops[qi]:
            fg = binary_product(ir, tv.charging[qi, n], tv.flow[qi], 0.0, od.demand, f"fg[{p.label}@{n}]")
            node_flow_terms[n][fg] = 1.0
    for od_k, qs in paths.by_od.items():
        seen = {n for qi in qs for n in stops[qi]}
        for n in seen:
            station_flow_max[n] += case.od_pairs[od_k].demand
    for m in case.evcs_nodes:
        nd = case.node(m)
        tv.node_flow[m] = ir.add_var(0.0, station_flow_max[m], name=f"xm[{m}]")
        t_hi = nd.wait_base * (1.0 + nd.congestion * station_flow_max[m])
        tv.node_time[m] = ir.add_var(nd.wait_base, t_hi, name=f"tm[{m}]")
        terms = {tv.node_flow[m]: 1.0}
        for k, c in node_flow_terms[m].items():
            terms[k] = -c
        ir.add_lin(LinExpr.of(terms), "==", 0.0, f"xm_def[{m}]")
        ir.add_lin(
            LinExpr.of({tv.node_time[m]: 1.0, tv.node_flow[m]: -nd.wait_base * nd.congestion}),
            "==",
            nd.wait_base,
            f"tm_def[{m}]",
        )

    # coupling: p_T = sum over paths of f*E (difference-of-squares PWL)
    pt_terms: dict[str, dict] = {m: {} for m in case.evcs_nodes}
    tol = {m: 0.0 for m in case.evcs_nodes}
    for qi, p in enumerate(paths.paths):
        od = case.od_pairs[p.od]
        for n in stops[qi]:
            prod, t = product_pwl(
                ir, tv.flow[qi], tv.charge[qi, n], od.demand, _charge_cap(case, od, n),
                pwl.coupling_breakpoints, f"fE[{p.label}@{n}]",
            )  # fmt: skip
            tv.product[qi, n] = prod
            pt_terms[n][prod] = -1.0
            tol[n] += t
    tv.coupling_tol = max(tol.values(), default=0.0)
    for m in case.evcs_nodes:
        cap = case.node(m).p_max
        tv.p_t[m] = ir.add_var(0.0, cap, name=f"pT[{m}]")
        terms = dict(pt_terms[m])
        terms[tv.p_t[m]] = 1.0
        ir.add_lin(LinExpr.of(terms), "==", 0.0, f"pT_def[{m}]")

    # path costs and equilibrium
    cost_lo, cost_hi = {}, {}
    for qi, p in enumerate(paths.paths):
        lo = w * sum(case.arc(*a).t0 for a in p.arcs)
        hi = w * sum(arc_tmax[a] for a in p.arcs)
        terms: dict[int, float] = {}
        for a in p.arcs:
            terms[tv.arc_time[a]] = terms.get(tv.arc_time[a], 0.0) + w
        for n in stops[qi]:
            nd = case.node(n)
            od = case.od_pairs[p.od]
            E = tv.charge[qi, n]
            t_ub = ir.vars[tv.node_time[n]].upper
            h = binary_product(ir, tv.charging[qi, n], tv.node_time[n], nd.wait_base, t_ub, f"tg[{p.label}@{n}]")
            terms[E] = terms.get(E, 0.0) + w * MIN_PER_HOUR / nd.pile_power + nd.price
            terms[h] = terms.get(h, 0.0) + w
            e_cap = ir.vars[E].upper
            hi += (w * MIN_PER_HOUR / nd.pile_power + nd.price) * e_cap + w * t_ub
        cost_lo[qi], cost_hi[qi] = lo, hi
        tv.path_cost[qi] = ir.add_var(lo, hi, name=f"C[{p.label}]")
        terms[tv.path_cost[qi]] = -1.0
        ir.add_lin(LinExpr.of(terms), "==", 0.0, f"C_def[{p.label}]")

    obj = {}
    for od_k, qs in paths.by_od.items():
        od = case.od_pairs[od_k]
        c_lo = min(cost_lo[q] for q in qs)
        c_hi = min(cost_hi[q] for q in qs)
        tv.eq_cost[od_k] = ir.add_var(c_lo, c_hi, name=f"Crs[{od.origin}-{od.dest}]")
        ir.add_lin(LinExpr.of((tv.flow[q], 1.0) for q in qs), "==", od.demand, f"demand[{od.origin}-{od.dest}]")
        big_m = []
        for q in qs:
            tv.big_m[q] = 1.1 * (cost_hi[q] - c_lo)
            big_m.append(tv.big_m[q])
        linearize_ue(
            ir, [tv.flow[q] for q in qs], [tv.use[q] for q in qs], [tv.path_cost[q] for q in qs],
            tv.eq_cost[od_k], od.demand, big_m, f"ue[{od.origin}-{od.dest}]",
        )  # fmt: skip
        obj[tv.eq_cost[od_k]] = od.demand

    # flows on arcs
    for a, qs in sorted(incidence.items()):
        terms = {tv.arc_flow[a]: 1.0}
        for q in qs:
            terms[tv.flow[q]] = terms.get(tv.flow[q], 0.0) - 1.0
        ir.add_lin(LinExpr.of(terms), "==", 0.0, f"x_def[{a[0]}-{a[1]}]")

    ir.obj = LinExpr.of(obj)
    ir.boundary = {"p_T": [tv.p_t[m] for m in case.evcs_nodes]}
    return ir, tv, paths


def attach_augmented_objective_tn(ir: ProblemIR, lam_v, z, gamma: float) -> ProblemIR:
    """Social cost ``+ lam_v . p_T + gamma/2 ||p_T - z||^2``."""
    return attach_augmented_objective(ir, "p_T", lam_v, z, gamma, 1.0)


def extract_routing(values, tv: TnVars, paths: PathSet, case: TnCase, flow_tol: float = 1e-6) -> list[dict]:
    """Per-path flows, costs and charging stops, one record per path."""
    out = []
    for qi, p in enumerate(paths.paths):
        od = case.od_pairs[p.od]
        stops = [n for (q, n) in tv.charging if q == qi and values[tv.charging[q, n]] > 0.5]
        out.append(
            {
                "od": f"{od.origin}->{od.dest}",
                "path": list(p.nodes),
                "flow": float(values[tv.flow[qi]]),
                "used": bool(values[tv.flow[qi]] > flow_tol),
                "cost": float(values[tv.path_cost[qi]]),
                "charge_at": stops,
                "charge_kwh": {n: float(values[tv.charge[qi, n]]) for n in stops},
            }
        )
    return out


def station_power(values, tv: TnVars) -> dict:
    return {m: float(values[i]) for m, i in tv.p_t.items()}


def exact_station_power(values, tv: TnVars, case: TnCase) -> dict:
    """``sum f*E`` per station from the path variables, without the PWL approximation."""
    out = {m: 0.0 for m in case.evcs_nodes}
    for (q, n), e in tv.charge.items():
        out[n] += float(values[tv.flow[q]] * values[e])
    return out


def ue_certificate(values, tv: TnVars, paths: PathSet, rel_tol: float = 1e-3, flow_tol: float = 1e-6) -> list[str]:
    """Wardrop check: used paths cost C^rs, unused ones no less.  Returns violations."""
    bad = []
    for od_k, qs in paths.by_od.items():
        c_rs = float(values[tv.eq_cost[od_k]])
        slack = rel_tol * abs(c_rs)
        for q in qs:
            c_q = float(values[tv.path_cost[q]])
            label = paths.paths[q].label
            if values[tv.flow[q]] > flow_tol and abs(c_q - c_rs) > slack:
                bad.append(f"used path {label}: cost {c_q:.6g} vs equilibrium {c_rs:.6g}")
            if values[tv.flow[q]] <= flow_tol and c_q < c_rs - slack:
                bad.append(f"unused path {label}: cost {c_q:.6g} below equilibrium {c_rs:.6g}")
    return bad


def energy_replay(values, tv: TnVars, paths: PathSet, case: TnCase, tol: float = 1e-6, flow_tol: float = 1e-6):
    """Replay battery levels node by node along used paths.  Returns violations."""
    bad = []
    for qi, p in enumerate(paths.paths):
        if values[tv.flow[qi]] <= flow_tol:
            continue
        od = case.od_pairs[p.od]
        e = od.e_0
        for prev, n in p.arcs:
            drain = case.arc(prev, n).length * od.beta
            if e - drain < od.anxiety * od.e_max - tol:
                bad.append(f"{p.label}: range floor breached leaving {prev}")
            e -= drain
            if (qi, n) in tv.charge:
                E = float(values[tv.charge[qi, n]])
                e += E
                if values[tv.charging[qi, n]] > 0.5 and abs(e - od.e_max) > 1e-4:
                    bad.append(f"{p.label}: not full after charging at {n}")
            if not od.e_min - tol <= e <= od.e_max + tol:
                bad.append(f"{p.label}: battery level {e:.4g} out of range at {n}")
    return bad


def boundary_vector(values, tv: TnVars, case: TnCase) -> np.ndarray:
    return np.array([values[tv.p_t[m]] for m in case.evcs_nodes], dtype=float)
