import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from evcoord.cases import (
    TAGS,
    ScenarioError,
    builtin_case,
    load_scenario,
    make_toy,
    parse_scenario,
    resolve_scenario,
    save_scenario,
    serialize,
)
from evcoord.cases.builtin import make_case1, make_case2
from evcoord.cases.scenario import numeric_leaves, to_dict


@pytest.fixture(scope="module")
def case1_text():
    return serialize(builtin_case("case1"))


def line_of(text, needle):
    return text[: text.index(needle)].count("\n") + 1


@pytest.mark.parametrize("name", ["case1", "case2"])
def test_round_trip_exact(name, tmp_path):
    cfg = builtin_case(name)
    path = tmp_path / f"{name}.json"
    save_scenario(cfg, path)
    back = load_scenario(path)
    assert serialize(back) == serialize(cfg)
    assert back.provenance == cfg.provenance


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10**6))
def test_toy_round_trip(seed):
    cfg = make_toy(seed)
    assert serialize(parse_scenario(serialize(cfg))) == serialize(cfg)


@pytest.mark.parametrize("name,make", [("case1", make_case1), ("case2", make_case2)])
def test_shipped_files_match_generators(name, make):
    assert serialize(builtin_case(name)) == serialize(make())


def test_case1_shape():
    cfg = builtin_case("case1")
    assert len(cfg.feeders) == 3
    assert len(cfg.tn.nodes) == 5
    assert [od.demand for od in cfg.tn.od_pairs] == [30.0, 30.0]
    assert [(c.tn_node, c.feeder_node, c.grid_price) for c in cfg.coupling] == [
        ("2", "633", 70.47), ("3", "650", 77.52), ("5", "680", 84.57)]  # fmt: skip


def test_case2_shape():
    cfg = builtin_case("case2")
    assert len(cfg.feeders) == 4
    assert len(cfg.tn.nodes) == 13
    assert [(od.origin, od.dest, od.demand) for od in cfg.tn.od_pairs] == [
        ("1", "2", 60.0), ("1", "3", 60.0), ("4", "2", 60.0), ("4", "3", 60.0)]  # fmt: skip
    assert sorted(c.grid_price for c in cfg.coupling)[-1] == 91.62


def test_case1_arc_one_two():
    arcs = {(a.from_node, a.to_node): a for a in builtin_case("case1").tn.arcs}
    for key in [("1", "2"), ("2", "1")]:
        a = arcs[key]
        assert (a.t0, a.capacity, a.length) == (120.0, 40.0, 150.0)


def test_case1_algo_params():
    p = builtin_case("case1").algo
    assert (p.eps, p.eps_u, p.gamma, p.max_outer) == (6e-3, 1e-1, 4e-6, 300)
    assert (p.phi_low_p0, p.phi_low_v0) == (-9999.0, -99999.0)


@pytest.mark.parametrize("name", ["case1", "case2"])
def test_pv_is_200_kw_per_feeder(name):
    cfg = builtin_case(name)
    for f in cfg.feeders:
        assert sum(n.pv_p for n in f.nodes) == pytest.approx(0.2)


def test_absent_feeder_node_rejected(case1_text):
    bad = case1_text.replace('"feeder_node": "633"', '"feeder_node": "999"', 1)
    with pytest.raises(ScenarioError, match="999"):
        parse_scenario(bad, "c.json")


def test_schema_error_names_field_and_position(case1_text):
    line = line_of(case1_text, '"t0": 120.0')
    bad = case1_text.replace('"t0": 120.0', '"t0": "fast"', 1)
    with pytest.raises(ScenarioError) as info:
        parse_scenario(bad, "c.json")
    msg = str(info.value)
    assert msg.startswith(f"c.json:{line}:") and "tn.arcs[0].t0" in msg


def test_unknown_field_rejected(case1_text):
    bad = case1_text.replace('"capacity": 40.0', '"capacty": 40.0', 1)
    with pytest.raises(ScenarioError, match="capacty"):
        parse_scenario(bad, "c.json")


def test_missing_required_field(case1_text):
    doc = json.loads(case1_text)
    del doc["tn"]["arcs"][0]["capacity"]
    with pytest.raises(ScenarioError, match="capacity"):
        parse_scenario(json.dumps(doc))


def test_bad_json_reports_position():
    with pytest.raises(ScenarioError, match=r"^x\.json:2:"):
        parse_scenario('{"pdn": 1,\n oops}', "x.json")


def test_unknown_builtin_rejected():
    with pytest.raises(ScenarioError):
        builtin_case("case3")


def test_resolve_toy_names():
    assert serialize(resolve_scenario("toy7")) == serialize(make_toy(7))
    assert serialize(resolve_scenario("toy", seed=3)) == serialize(make_toy(3))


# --- provenance ----------------------------------------------------------------


@pytest.mark.parametrize("name", ["case1", "case2"])
def test_provenance_complete(name):
    cfg = builtin_case(name)
    leaves = [p for p, _ in numeric_leaves(to_dict(cfg))]
    assert set(leaves) == set(cfg.provenance)
    assert set(cfg.provenance.values()) <= set(TAGS)


def test_case1_tags():
    prov = builtin_case("case1").provenance
    assert all(prov[f"coupling[{i}].grid_price"] == "paper" for i in range(3))
    assert prov["tn.od_pairs[0].e_max"] == "default"
    assert prov["tn.arcs[0].t0"] == "paper"
    assert prov["algo.gamma"] == "paper"


def test_case2_arcs_reconstructed():
    cfg = builtin_case("case2")
    arc_tags = {t for p, t in cfg.provenance.items() if p.startswith("tn.arcs[")}
    assert arc_tags == {"reconstructed"}


def test_full_user_data_has_no_default_tags(case1_text):
    doc = json.loads(case1_text)
    doc["provenance"] = {}
    cfg = parse_scenario(json.dumps(doc))
    assert cfg.tag_counts()["default"] == 0


def test_absent_optional_field_is_defaulted_and_tagged(case1_text):
    doc = json.loads(case1_text)
    del doc["tn"]["od_pairs"][0]["e_0"]
    doc["provenance"] = {}
    cfg = parse_scenario(json.dumps(doc))
    assert cfg.provenance["tn.od_pairs[0].e_0"] == "default"
    assert cfg.tn.od_pairs[0].e_0 == 30.0


def test_bad_tag_rejected(case1_text):
    doc = json.loads(case1_text)
    doc["provenance"]["tn.arcs[0].t0"] = "folklore"
    with pytest.raises(ScenarioError):
        parse_scenario(json.dumps(doc))
