"""The two shipped test cases and the random toys, as scenario configs.

``builtin_case`` reads the JSON files under ``data/``; ``make_case1`` and
``make_case2`` are the generators those files were written from (run
``python -m evcoord.cases.builtin`` to rewrite them).
"""

from __future__ import annotations

import re
from importlib import resources
from pathlib import Path

from ..coordination.params import AlgoParams
from ..tn.model import OdPair, PwlConfig, TnArc, TnCase, TnNode
from .feeders import ieee13, ieee33
from .scenario import (
    Coupling,
    ScenarioConfig,
    ScenarioError,
    load_scenario,
    numeric_leaves,
    parse_scenario,
    serialize,
    to_dict,
)
from .toy import toy_case

BUILTIN = ("case1", "case2")

# algorithm settings published with both cases
PUBLISHED_ALGO = dict(eps=6e-3, eps_u=1e-1, gamma=4e-6, max_outer=300, phi_low_p0=-9999.0, phi_low_v0=-99999.0)

# EV figures chosen so that the long case-1 arcs force a recharge
EV = dict(e_max=60.0, e_min=6.0, e_0=54.0, beta=0.2, anxiety=0.1)

CASE1_PRICES = {"2": 70.47, "3": 77.52, "5": 84.57}
CASE1_FEEDER_NODES = {"2": "633", "3": "650", "5": "680"}
CASE1_ARCS = [("1", "2", 120.0, 40.0, 150.0), ("2", "3", 130.0, 40.0, 150.0), ("3", "4", 120.0, 40.0, 150.0),
              ("1", "5", 195.0, 47.0, 225.0), ("5", "4", 195.0, 47.0, 225.0)]  # fmt: skip

CASE2_PRICES = {"6": 70.47, "7": 77.52, "9": 84.57, "10": 91.62}
CASE2_FEEDER_NODES = {"6": "3", "7": "4", "9": "5", "10": "6"}
# Nguyen-Dupuis arcs with free-flow times in base units
ND_ARCS = [("1", "5", 7), ("1", "12", 9), ("4", "5", 9), ("4", "9", 12), ("5", "6", 3), ("5", "9", 9), ("6", "7", 5),
           ("6", "10", 13), ("7", "8", 5), ("7", "11", 9), ("8", "2", 9), ("9", "10", 10), ("9", "13", 9),
           ("10", "11", 6), ("11", "2", 9), ("11", "3", 8), ("12", "6", 7), ("12", "8", 14), ("13", "3", 11)]  # fmt: skip
ND_MINUTES = 10.0  # minutes per base unit
ND_MILES = 10.0  # miles per base unit
ND_CAPACITY = 120.0
CASE2_PATH_FACTOR = 1.1


def _rules_to_regex(pattern: str):
    return re.compile(re.escape(pattern).replace(r"\[\*\]", r"\[\d+\]").replace(r"\*", r"[^.\[]+") + "$")


def tag(cfg: ScenarioConfig, rules, base: str = "reconstructed") -> ScenarioConfig:
    """Tag every numeric leaf: the last matching ``(pattern, tag)`` rule wins."""
    compiled = [(_rules_to_regex(p), t) for p, t in rules]
    prov = {}
    for path, _ in numeric_leaves(to_dict(cfg)):
        t = base
        for rx, tg in compiled:
            if rx.match(path):
                t = tg
        prov[path] = t
    cfg.provenance = prov
    return cfg


_COMMON_RULES = [
    ("algo.*", "default"),
    *[(f"algo.{k}", "paper") for k in PUBLISHED_ALGO],
    ("pwl.*", "default"),
    ("tn.time_value", "default"),
    ("tn.path_length_factor", "paper"),
    ("tn.od_pairs[*].demand", "paper"),
    ("tn.od_pairs[*].e_max", "default"),
    ("tn.od_pairs[*].e_min", "default"),
    ("tn.od_pairs[*].anxiety", "default"),
    ("tn.nodes[*].pile_power", "default"),
    ("tn.nodes[*].wait_base", "default"),
    ("tn.nodes[*].congestion", "default"),
    ("tn.nodes[*].price", "default"),
    ("coupling[*].grid_price", "paper"),
    ("pdn.feeders[*].evcs_pf_angle", "default"),
]


def _stations(prices, ids, p_max):
    return [TnNode(n, has_evcs=n in prices, b_max=60.0 if n in prices else 0.0,
                   price=prices[n] / 1000.0 if n in prices else 0.0, p_max=p_max)
            for n in ids]  # fmt: skip


def _pv_rules(cfg: ScenarioConfig):
    # the published PV size is 200 kW at the EVCS bus of every feeder
    rules = []
    for i, f in enumerate(cfg.feeders):
        for j, n in enumerate(f.nodes):
            if n.has_evcs:
                rules.append((f"pdn.feeders[{i}].nodes[{j}].pv_p", "paper"))
    return rules


def make_case1() -> ScenarioConfig:
    nodes = _stations(CASE1_PRICES, list("12345"), 3000.0)
    arcs = []
    for a, b, t0, c, d in CASE1_ARCS:
        arcs += [TnArc(a, b, t0, c, d), TnArc(b, a, t0, c, d)]
    ods = [OdPair("1", "4", 30.0, **EV), OdPair("4", "1", 30.0, **EV)]
    tn = TnCase("case1", nodes, arcs, ods, 0.5)
    feeders, coupling = [], []
    for i, m in enumerate(tn.evcs_nodes):
        name = f"F{i + 1}"
        feeders.append(ieee13(name, CASE1_FEEDER_NODES[m], CASE1_PRICES[m], load_scale=0.3))
        coupling.append(Coupling(m, name, CASE1_FEEDER_NODES[m], CASE1_PRICES[m]))
    cfg = ScenarioConfig(feeders, tn, coupling, AlgoParams(**PUBLISHED_ALGO), PwlConfig(), 2.0, 0)
    rules = [*_COMMON_RULES, ("tn.arcs[*].t0", "paper"), ("tn.arcs[*].capacity", "paper"),
             ("tn.arcs[*].length", "paper"), *_pv_rules(cfg)]  # fmt: skip
    return tag(cfg, rules).validate()


def make_case2() -> ScenarioConfig:
    nodes = _stations(CASE2_PRICES, [str(i) for i in range(1, 14)], 4000.0)
    arcs = [TnArc(a, b, t * ND_MINUTES, ND_CAPACITY, t * ND_MILES) for a, b, t in ND_ARCS]
    ods = [OdPair(o, d, 60.0, **EV) for o, d in [("1", "2"), ("1", "3"), ("4", "2"), ("4", "3")]]
    tn = TnCase("case2", nodes, arcs, ods, 0.5)
    feeders, coupling = [], []
    for i, m in enumerate(tn.evcs_nodes):
        name = f"F{i + 1}"
        feeders.append(ieee33(name, CASE2_FEEDER_NODES[m], CASE2_PRICES[m], load_scale=0.5))
        coupling.append(Coupling(m, name, CASE2_FEEDER_NODES[m], CASE2_PRICES[m]))
    cfg = ScenarioConfig(feeders, tn, coupling, AlgoParams(**PUBLISHED_ALGO), PwlConfig(), CASE2_PATH_FACTOR, 0)
    rules = [*_COMMON_RULES, ("tn.path_length_factor", "reconstructed"), *_pv_rules(cfg)]
    return tag(cfg, rules).validate()


def make_toy(seed: int) -> ScenarioConfig:
    """Random toy (see :mod:`.toy`) with a stiffer penalty that suits its small station loads."""
    feeders, tn, pwl = toy_case(seed)
    coupling = []
    for f, m in zip(feeders, tn.evcs_nodes):
        coupling.append(Coupling(m, f.name, f.evcs_nodes[0], f.grid_price))
    algo = AlgoParams(gamma=4e-4, admm_rho=4e-4)
    cfg = ScenarioConfig(feeders, tn, coupling, algo, pwl, 2.0, seed)
    rules = [("algo.*", "default"), ("algo.gamma", "reconstructed"), ("algo.admm_rho", "reconstructed"),
             ("algo.seed", "reconstructed"), ("tn.path_length_factor", "paper")]  # fmt: skip
    return tag(cfg, rules).validate()


def builtin_case(name: str) -> ScenarioConfig:
    if name not in BUILTIN:
        raise ScenarioError(f"unknown built-in case {name!r} (choose from {', '.join(BUILTIN)})")
    src = resources.files(__package__).joinpath("data", f"{name}.json")
    return parse_scenario(src.read_text(), f"{name}.json")


def resolve_scenario(spec: str, seed: int | None = None) -> ScenarioConfig:
    """A built-in name, ``toy``/``toy<seed>``, or a path to a scenario file."""
    if spec in BUILTIN:
        return builtin_case(spec)
    m = re.fullmatch(r"toy(\d*)", spec)
    if m:
        return make_toy(int(m.group(1)) if m.group(1) else (seed or 0))
    return load_scenario(spec)


def write_builtin(directory) -> None:
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    for name, make in (("case1", make_case1), ("case2", make_case2)):
        (out / f"{name}.json").write_text(serialize(make()))


if __name__ == "__main__":
    write_builtin(Path(__file__).parent / "data")
