from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import case_agents
from evcoord.ir import LinExpr, ProblemIR
from evcoord.solve import solve
from evcoord.tn import (
    OdPair,
    PathError,
    TnArc,
    TnCase,
    TnCaseError,
    TnNode,
    attach_augmented_objective_tn,
    bpr_breakpoints,
    bpr_max_error,
    bpr_time,
    build_tn_ir,
    energy_replay,
    enumerate_paths,
    exact_station_power,
    extract_routing,
    linearize_ue,
    product_pwl,
    product_tolerance,
    pwl_bpr,
    station_power,
    ue_certificate,
)
from oracles import reference_solve


def fixed(ir, vid, value):
    ir.vars[vid] = replace(ir.vars[vid], lower=value, upper=value)


def line_case(lengths, demand=10.0, e_0=54.0, stations=("S",)):
    """O -> S -> D style chain; ``lengths`` gives consecutive arc lengths."""
    ids = ["O", *stations, "D"]
    nodes = [TnNode(n, has_evcs=n in stations, b_max=60.0, price=0.08) for n in ids]
    arcs = [TnArc(a, b, 0.5 * d, 20.0, d) for (a, b), d in zip(zip(ids[:-1], ids[1:]), lengths)]
    od = OdPair("O", "D", demand, e_max=60.0, e_min=6.0, e_0=e_0, beta=0.2, anxiety=0.1)
    return TnCase("line", nodes, arcs, [od], 0.5)


# --- paths -------------------------------------------------------------------


def test_length_filter_drops_long_detour():
    nodes = [TnNode(n, has_evcs=True) for n in "ABSC"]
    arcs = [TnArc("A", "S", 1, 1, 0.5), TnArc("S", "B", 1, 1, 0.5), TnArc("A", "C", 1, 1, 1.5), TnArc("C", "B", 1, 1, 1.5)]
    ps = enumerate_paths(TnCase("tri", nodes, arcs, [OdPair("A", "B", 1.0)]))
    assert [p.nodes for p in ps.paths] == [("A", "S", "B")]


def test_station_filter_and_error():
    nodes = [TnNode("A"), TnNode("B"), TnNode("C")]
    arcs = [TnArc("A", "C", 1, 1, 1), TnArc("C", "B", 1, 1, 1)]
    with pytest.raises(PathError):
        enumerate_paths(TnCase("none", nodes, arcs, [OdPair("A", "B", 1.0)]))


def test_unreachable_destination():
    nodes = [TnNode("A"), TnNode("B", has_evcs=True)]
    with pytest.raises(PathError):
        enumerate_paths(TnCase("cut", nodes, [TnArc("B", "A", 1, 1, 1)], [OdPair("A", "B", 1.0)]))


def test_case1_paths():
    paths = case_agents("case1").paths
    labels = {p.label for p in paths.paths}
    assert {"1-2-3-4", "1-5-4", "4-3-2-1", "4-5-1"} <= labels


def test_path_order_deterministic():
    tn = case_agents("case2").config.tn
    a = enumerate_paths(tn, 1.1)
    b = enumerate_paths(tn, 1.1)
    assert [p.nodes for p in a.paths] == [p.nodes for p in b.paths]
    for qs in a.by_od.values():
        keys = [[int(n) for n in a.paths[q].nodes] for q in qs]
        assert keys == sorted(keys)


def test_case_checks():
    bad = line_case([50, 50])
    bad.od_pairs[0] = replace(bad.od_pairs[0], e_0=70.0)
    with pytest.raises(TnCaseError):
        build_tn_ir(bad)


# --- BPR -----------------------------------------------------------------------


def bpr_ir(t0=120.0, cap=40.0, x_val=0.0):
    ir = ProblemIR()
    x = ir.add_var(0.0, 2 * cap)
    t = ir.add_var(0.0, 1e4)
    pwl_bpr(ir, x, t, t0, cap, 2 * cap, 8, "bpr")
    fixed(ir, x, x_val)
    ir.obj = LinExpr.var(t)
    return ir, t


def test_bpr_zero_flow_is_free_flow_time():
    ir, t = bpr_ir()
    assert solve(ir).values[t] == pytest.approx(120.0, abs=1e-9)


def test_bpr_at_capacity():
    ir, t = bpr_ir(x_val=40.0)
    assert solve(ir).values[t] == pytest.approx(1.15 * 120.0, abs=1e-7)


def test_bpr_error_matches_dense_grid():
    xs, ts = bpr_breakpoints(120.0, 40.0, 80.0, 8)
    assert np.allclose(xs, np.linspace(0, 80, 9))
    grid = np.linspace(0, 80, 200001)
    dense = np.max(np.abs(np.interp(grid, xs, ts) - bpr_time(grid, 120.0, 40.0)))
    assert bpr_max_error(120.0, 40.0, 80.0, 8) == pytest.approx(dense, rel=1e-3)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.0, 80.0))
def test_bpr_interpolant_above_curve(x):
    # convex curve: the chord lies above it
    ir, t = bpr_ir(x_val=x)
    assert solve(ir).values[t] >= float(bpr_time(x, 120.0, 40.0)) - 1e-6


# --- user equilibrium --------------------------------------------------------


def ue_ir(costs, demand=30.0):
    ir = ProblemIR()
    f = [ir.add_var(0.0, demand) for _ in costs]
    nu = [ir.add_binary() for _ in costs]
    c = [ir.add_var(0.0, 100.0) for _ in costs]
    for vid, val in zip(c, costs):
        fixed(ir, vid, val)
    crs = ir.add_var(0.0, 100.0)
    ir.add_lin(LinExpr.of((q, 1.0) for q in f), "==", demand)
    linearize_ue(ir, f, nu, c, crs, demand, [110.0] * len(costs), "ue")
    ir.obj = LinExpr.var(crs, demand)
    return ir, f, nu, crs


def test_ue_cheapest_path_takes_all():
    ir, f, _, crs = ue_ir([10.0, 12.0])
    sol = solve(ir)
    assert sol.values[crs] == pytest.approx(10.0)
    assert sol.values[f[0]] == pytest.approx(30.0) and sol.values[f[1]] == pytest.approx(0.0)


def test_ue_used_path_pins_cost():
    ir, f, nu, crs = ue_ir([10.0, 12.0])
    fixed(ir, nu[1], 1.0)
    sol = solve(ir)
    # path 2 in use forces C^rs = 12, but path 1 costs 10 < C^rs: no equilibrium
    assert sol.status == "infeasible"


def test_ue_unused_path_carries_nothing():
    ir, f, nu, _ = ue_ir([10.0, 10.0])
    fixed(ir, nu[0], 0.0)
    sol = solve(ir)
    assert sol.values[f[0]] == pytest.approx(0.0) and sol.values[f[1]] == pytest.approx(30.0)


# --- coupling products -------------------------------------------------------


def product_ir(f_val, e_val, f_hi=20.0, e_hi=40.0, n_bp=7):
    ir = ProblemIR()
    f = ir.add_var(0.0, f_hi)
    e = ir.add_var(0.0, e_hi)
    w, tol = product_pwl(ir, f, e, f_hi, e_hi, n_bp, "fE")
    fixed(ir, f, f_val)
    fixed(ir, e, e_val)
    return ir, w, tol


def test_product_zero_energy():
    ir, w, _ = product_ir(13.0, 0.0)
    assert solve(ir).values[w] == pytest.approx(0.0, abs=1e-9)


def test_product_exact_at_breakpoints():
    ir, w, _ = product_ir(10.0, 20.0)
    assert solve(ir).values[w] == pytest.approx(200.0, abs=1e-9)


def test_product_within_tolerance():
    rng = np.random.default_rng(3)
    for _ in range(200):
        fv, ev = rng.uniform(0, 20), rng.uniform(0, 40)
        ir, w, tol = product_ir(fv, ev, n_bp=8)
        assert abs(solve(ir).values[w] - fv * ev) <= tol + 1e-9


@settings(max_examples=40, deadline=None)
@given(st.floats(0.0, 30.0), st.floats(1.0, 60.0), st.integers(3, 9), st.booleans())
def test_product_exact_when_a_factor_is_zero(value, e_hi, n_bp, zero_energy):
    # a vehicle passing a station without charging books no power there
    f_val, e_val = (value, 0.0) if zero_energy else (0.0, min(value, e_hi))
    ir, w, _ = product_ir(f_val, e_val, f_hi=30.0, e_hi=e_hi, n_bp=n_bp)
    assert solve(ir).values[w] == pytest.approx(0.0, abs=1e-7)


def test_product_tolerance_formula():
    assert product_tolerance(20.0, 40.0, 7) == pytest.approx(25.0 / 4.0)


def test_product_needs_finite_bounds():
    ir = ProblemIR()
    f, e = ir.add_var(0.0, 1.0), ir.add_var(0.0, 1.0)
    with pytest.raises(ValueError):
        product_pwl(ir, f, e, float("inf"), 1.0, 8, "p")


# --- energy and full model ---------------------------------------------------


def test_forced_recharge():
    # 300 miles at 0.2 kWh/mile needs 60 kWh; 54 kWh on board is not enough
    case = line_case([150.0, 150.0])
    ir, tv, paths = build_tn_ir(case)
    sol = solve(ir)
    assert sol.ok
    assert sol.values[tv.charging[0, "S"]] == pytest.approx(1.0)
    deficit = 300 * 0.2 + 0.1 * 60 - 54.0
    assert sol.values[tv.charge[0, "S"]] >= deficit - 1e-9
    assert energy_replay(sol.values, tv, paths, case) == []


def test_single_path_takes_all_demand():
    case = line_case([60.0, 60.0], demand=17.0)
    ir, tv, paths = build_tn_ir(case)
    sol = solve(ir)
    assert sol.values[tv.flow[0]] == pytest.approx(17.0)
    assert ue_certificate(sol.values, tv, paths) == []


def test_tn_augmented_identity_and_penalty():
    case = line_case([150.0, 150.0])
    ir, tv, _ = build_tn_ir(case)
    same = attach_augmented_objective_tn(ir, [0.0], [0.0], 0.0)
    assert same.obj == ir.obj and same.obj_quad == []
    aug = attach_augmented_objective_tn(ir, [0.0], [0.0], 2.0)
    x = np.zeros(ir.n)
    x[tv.p_t["S"]] = 1.0
    assert aug.objective_value(x) - ir.objective_value(x) == pytest.approx(1.0)
    lam = attach_augmented_objective_tn(ir, [5.0], [0.0], 0.0)
    assert lam.objective_value(x) - ir.objective_value(x) == pytest.approx(5.0)


def test_case1_stand_alone_routing_matches_milp_oracle():
    a = case_agents("case1")
    ir = a.tn.ir
    sol = solve(ir)
    status, _, ref = reference_solve(ir, solver="HIGHS")
    assert status == "optimal"
    assert sol.objective == pytest.approx(ref, rel=1e-6)
    x = sol.values
    routes = extract_routing(x, a.tn_vars, a.paths, a.config.tn)
    total = {}
    for r in routes:
        total[r["od"]] = total.get(r["od"], 0.0) + r["flow"]
    assert total == pytest.approx({"1->4": 30.0, "4->1": 30.0})
    assert ue_certificate(x, a.tn_vars, a.paths) == []
    assert energy_replay(x, a.tn_vars, a.paths, a.config.tn) == []
    # PWL station power against the exact product sum
    pwl, exact = station_power(x, a.tn_vars), exact_station_power(x, a.tn_vars, a.config.tn)
    for m in pwl:
        assert abs(pwl[m] - exact[m]) <= a.tn_vars.coupling_tol + 1e-6
