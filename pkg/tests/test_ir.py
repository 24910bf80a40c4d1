import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from evcoord.ir import (
    BINARY,
    CONTINUOUS,
    IRError,
    LinExpr,
    Pattern,
    ProblemIR,
    QuadTerm,
    VarSpec,
    active_segment,
    fix_binaries,
    fix_pattern,
    fix_sos2,
    sos2_ok,
)


def small_ir():
    ir = ProblemIR(name="small")
    a = ir.add_binary("a")
    b = ir.add_binary("b")
    x = ir.add_var(0.0, 10.0, name="x")
    ir.add_lin(LinExpr.of({a: 1.0, b: 1.0}), "<=", 1.0, "pick")
    ir.add_lin(LinExpr.of({x: 1.0, a: -4.0}), "<=", 2.0, "link")
    ir.add_cone([x], LinExpr.const(4.0), LinExpr.var(x), "c")
    ws = [ir.add_var(0.0, 1.0, name=f"w{i}") for i in range(3)]
    ir.add_sos2(ws, "s")
    ir.obj = LinExpr.of({a: -3.0, b: -2.0, x: 1.0})
    ir.boundary = {"p_D": [x]}
    return ir


def test_add_var_dense_ids():
    ir = ProblemIR()
    assert ir.add_var(0.0, 1.0) == 0
    assert ir.add_binary() == 1
    assert ir.vars[1].kind == BINARY


def test_inverted_bounds_rejected():
    with pytest.raises(IRError):
        ProblemIR().add_var(1.0, 0.0)
    with pytest.raises(IRError):
        VarSpec(0.0, 2.0, BINARY)
    with pytest.raises(IRError):
        VarSpec(math.nan, 1.0)


def test_linexpr_normalizes_duplicates():
    e = LinExpr.of([(2, 1.0), (0, 3.0), (2, 2.5), (1, 0.0)], 1.5)
    assert e.terms == ((0, 3.0), (2, 3.5))
    assert e.value([1.0, 9.0, 2.0]) == pytest.approx(1.5 + 3.0 + 7.0)
    f = 2 * e - LinExpr.var(0, 6.0) + 1
    assert f.terms == ((2, 7.0),) and f.constant == 4.0


def test_fix_binaries_clamps_and_relabels():
    ir = small_ir()
    out = fix_binaries(ir, {0: 1, 1: 0})
    assert (out.vars[0].lower, out.vars[0].upper) == (1.0, 1.0)
    assert (out.vars[1].lower, out.vars[1].upper) == (0.0, 0.0)
    assert out.vars[0].kind == CONTINUOUS and out.binaries() == []
    # original untouched
    assert ir.vars[0].kind == BINARY


def test_fix_binaries_identity_on_empty():
    ir = ProblemIR()
    ir.add_var(0.0, 1.0)
    out = fix_binaries(ir, {})
    assert out.to_dict() == ir.to_dict()


def test_fix_binaries_rejects_bad_assignments():
    ir = small_ir()
    with pytest.raises(IRError):
        fix_binaries(ir, {0: 1})
    with pytest.raises(IRError):
        fix_binaries(ir, {0: 1, 1: 0, 2: 1})
    with pytest.raises(IRError):
        fix_binaries(ir, {0: 1, 1: 2})


def test_fix_binaries_idempotent():
    ir = small_ir()
    once = fix_binaries(ir, {0: 0, 1: 1})
    # a second fix has nothing left to assign and must not change anything
    assert fix_binaries(once, {}).to_dict() == once.to_dict()


def test_validate_clean_and_broken():
    ir = small_ir()
    assert ir.validate() == []
    bad = small_ir()
    bad.add_cone([99], LinExpr.const(1.0), LinExpr.const(1.0), "ghost")
    assert len(bad.validate()) == 1
    short = small_ir()
    short.add_sos2([2], "tiny")
    assert len(short.validate()) == 1


def test_validate_flags_indefinite_quadratic():
    ir = small_ir()
    ir.obj_quad = [QuadTerm(2, 2, -1.0)]
    assert any("semidefinite" in d for d in ir.validate())


def test_json_round_trip():
    ir = small_ir()
    ir.add_var(-math.inf, math.inf, name="free")
    ir.obj_quad = [QuadTerm(2, 2, 0.5)]
    back = ProblemIR.from_json(ir.to_json())
    assert back.to_dict() == ir.to_dict()
    assert back.vars[-1].lower == -math.inf


def test_violations_reports_each_kind():
    ir = small_ir()
    x = np.array([0.5, 1.0, 11.0, 0.5, 0.0, 0.5])
    msgs = " ".join(ir.violations(x))
    for word in ("fractional", "bound", "pick", "cone", "sos2"):
        assert word in msgs


def test_fix_sos2_and_pattern():
    ir = small_ir()
    out = fix_sos2(ir, {"s": 1})
    assert out.sos2 == [] and out.vars[3].upper == 0.0 and out.vars[5].upper == 1.0
    with pytest.raises(IRError):
        fix_sos2(ir, {"s": 2})
    x = np.array([1.0, 0.0, 3.0, 0.0, 0.25, 0.75])
    pat = Pattern.from_values(ir, x)
    assert pat.binaries == {0: 1, 1: 0} and pat.segments == {"s": 1}
    fixed = fix_pattern(ir, pat)
    assert fixed.binaries() == [] and fixed.sos2 == []


@given(st.lists(st.floats(0.0, 1.0), min_size=2, max_size=8), st.integers(0, 6))
def test_active_segment_matches_support(vals, k):
    k = k % (len(vals) - 1)
    w = [0.0] * len(vals)
    w[k], w[k + 1] = vals[0], vals[1]
    assert sos2_ok(w)
    seg = active_segment(w)
    assert all(abs(w[i]) <= 1e-9 for i in range(len(w)) if i not in (seg, seg + 1))


@settings(max_examples=50)
@given(st.integers(3, 8), st.data())
def test_non_adjacent_support_rejected(n, data):
    i = data.draw(st.integers(0, n - 3))
    j = data.draw(st.integers(i + 2, n - 1))
    w = [0.0] * n
    w[i] = w[j] = 0.5
    assert not sos2_ok(w)
    with pytest.raises(IRError):
        active_segment(w)
