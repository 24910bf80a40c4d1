import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import case_agents
from evcoord.cases import ieee13
from evcoord.pdn import (
    KW_PER_MW,
    PdnCase,
    PdnLine,
    PdnNode,
    TopologyError,
    attach_augmented_objective_pdn,
    build_pdn_ir,
    extract_dispatch,
    grid_cost,
)
from evcoord.solve import solve
from oracles import reference_solve


def two_node(load=0.0, r=0.0, x=0.0, evcs=False, price=50.0):
    nodes = [PdnNode("0"), PdnNode("1", p_load=load, has_evcs=evcs, evcs_p_max=2.0)]
    return PdnCase("two", nodes, [PdnLine("0", "1", r, x, 25.0, 5.0)], "0", price)


def pinned(ir, ids, value=0.0):
    out = ir.copy()
    for vid in ids:
        out.vars[vid] = replace(out.vars[vid], lower=value, upper=value)
    return out


def test_empty_feeder_draws_nothing():
    case = two_node()
    ir, pv = build_pdn_ir(case)
    sol = solve(ir)
    d = extract_dispatch(sol.values, pv, case)["two"]
    assert d["p_grid_mw"] == pytest.approx(0.0, abs=1e-7)
    for flow in d["flows"].values():
        assert flow["p_mw"] == pytest.approx(0.0, abs=1e-7)


def test_lossless_line_carries_the_load():
    case = two_node(load=1.0)
    ir, pv = build_pdn_ir(case)
    sol = solve(ir)
    d = extract_dispatch(sol.values, pv, case)["two"]
    assert d["p_grid_mw"] == pytest.approx(1.0, abs=1e-7)
    assert grid_cost(ir, sol.values) == pytest.approx(50.0, abs=1e-5)


def test_lossy_line_costs_more():
    sol = solve(build_pdn_ir(two_node(load=1.0, r=0.05, x=0.05))[0])
    assert sol.objective > 50.0 + 1e-6


def test_evcs_demand_in_kw():
    case = two_node(evcs=True)
    ir, pv = build_pdn_ir(case)
    assert ir.boundary["p_D"] == [pv.p_evcs["two", "1"]]
    sol = solve(pinned(ir, ir.boundary["p_D"], 500.0))
    assert sol.values[pv.p_grid["two"]] == pytest.approx(500.0 / KW_PER_MW, abs=1e-7)
    # reactive demand follows the power factor
    assert sol.values[pv.q_evcs["two", "1"]] == pytest.approx(0.5 * math.tan(math.acos(0.95)), rel=1e-9)


def test_case1_feeder_against_conic_oracle():
    feeder = case_agents("case1").config.feeders[0]
    ir, _ = build_pdn_ir(feeder)
    ir = pinned(ir, ir.boundary["p_D"])
    ours = solve(ir)
    status, _, ref = reference_solve(ir, solver="CLARABEL")
    assert status == "optimal"
    assert ours.objective == pytest.approx(ref, rel=1e-4)


def test_case1_voltages_in_limits():
    feeder = case_agents("case1").config.feeders[0]
    ir, pv = build_pdn_ir(feeder)
    sol = solve(pinned(ir, ir.boundary["p_D"]))
    v = extract_dispatch(sol.values, pv, feeder)[feeder.name]["v_sq"]
    for n in feeder.nodes:
        assert n.v_min - 1e-7 <= v[n.id] <= n.v_max + 1e-7


def test_augmented_identity():
    ir, _ = build_pdn_ir(two_node(evcs=True))
    aug = attach_augmented_objective_pdn(ir, [0.0], [0.0], 0.0)
    assert aug.obj == ir.obj and aug.obj_quad == [] and aug.lin == ir.lin


def test_augmented_penalty_arithmetic():
    ir, _ = build_pdn_ir(two_node(evcs=True))
    aug = attach_augmented_objective_pdn(ir, [0.0], [1.0], 2.0)
    sol = solve(pinned(aug, ir.boundary["p_D"]))
    base = solve(pinned(ir, ir.boundary["p_D"]))
    assert sol.objective - base.objective == pytest.approx(1.0, abs=1e-7)


def test_augmented_multiplier_sign():
    ir, _ = build_pdn_ir(two_node(evcs=True))
    aug = attach_augmented_objective_pdn(ir, [3.0], [0.0], 0.0)
    x = np.zeros(ir.n)
    x[ir.boundary["p_D"][0]] = 2.0
    assert aug.objective_value(x) - ir.objective_value(x) == pytest.approx(-6.0)


def test_augmented_dimension_checked():
    ir, _ = build_pdn_ir(two_node(evcs=True))
    with pytest.raises(ValueError):
        attach_augmented_objective_pdn(ir, [0.0, 0.0], [0.0], 1.0)


def test_two_parents_rejected():
    nodes = [PdnNode("0"), PdnNode("1"), PdnNode("2")]
    lines = [PdnLine("0", "1", 0.01, 0.01, 9, 3), PdnLine("0", "2", 0.01, 0.01, 9, 3), PdnLine("1", "2", 0.01, 0.01, 9, 3)]
    with pytest.raises(TopologyError):
        build_pdn_ir(PdnCase("loop", nodes, lines, "0", 50.0))


def test_island_rejected():
    nodes = [PdnNode("0"), PdnNode("1"), PdnNode("2"), PdnNode("3")]
    lines = [PdnLine("0", "1", 0.01, 0.01, 9, 3), PdnLine("2", "3", 0.01, 0.01, 9, 3)]
    with pytest.raises(TopologyError):
        build_pdn_ir(PdnCase("island", nodes, lines, "0", 50.0))


def test_negative_impedance_rejected():
    case = two_node(r=-0.1)
    with pytest.raises(TopologyError):
        build_pdn_ir(case)


def hull_rows(ir, key):
    cone = next(c for c in ir.cones if c.name == f"two.hull_cone[{key}]")
    row = next(r for r in ir.lin if r.name == f"two.hull_row[{key}]")
    return cone, row


def test_hull_contains_exact_branch_flow_points():
    case = two_node()
    ir, pv = build_pdn_ir(case)
    cone, row = hull_rows(ir, "0-1")
    line, n0 = case.lines[0], case.nodes[0]
    rng = np.random.default_rng(11)
    key = ("two", "0", "1")
    for _ in range(1000):
        v = rng.uniform(n0.v_min, n0.v_max)
        s = line.s_max * math.sqrt(rng.uniform())
        th = rng.uniform(0, 2 * math.pi)
        p, q = s * math.cos(th), s * math.sin(th)
        ell = (p * p + q * q) / v  # exact branch flow
        x = np.zeros(ir.n)
        x[pv.p[key]], x[pv.q[key]], x[pv.v["two", "0"]], x[pv.ell[key]] = p, q, v, ell
        g, scale = cone.residual(x)
        assert g <= 1e-9 * scale
        assert row.violation(x) <= 1e-9 * line.s_max**2


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2), st.floats(0.0, 0.05))
def test_more_load_never_cheaper(node, bump):
    feeder = ieee13("F", "680", 70.0, load_scale=0.3)
    ir, _ = build_pdn_ir(feeder)
    base = solve(pinned(ir, ir.boundary["p_D"])).objective
    target = [n for n in feeder.nodes if n.p_load > 0][node]
    heavier = replace(feeder, nodes=[replace(n, p_load=n.p_load + bump) if n is target else n for n in feeder.nodes])
    ir2, _ = build_pdn_ir(heavier)
    more = solve(pinned(ir2, ir2.boundary["p_D"])).objective
    assert more >= base - 1e-6 * abs(base)


def test_balance_rows_hold_at_solution():
    feeder = case_agents("case1").config.feeders[1]
    ir, _ = build_pdn_ir(feeder)
    sol = solve(pinned(ir, ir.boundary["p_D"], 200.0))
    for row in ir.lin:
        if "bal[" in row.name or "vdrop[" in row.name:
            assert row.violation(sol.values) <= 1e-6
