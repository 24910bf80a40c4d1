"""Scenario files: one JSON document holding both networks, their coupling,
algorithm settings and a provenance tag for every number.

Layout (top-level keys are fixed)::

    {"pdn":        {"feeders": [{"name", "grid_node", "evcs_pf_angle",
                                 "nodes": [...], "lines": [...]}, ...]},
     "tn":         {"name", "time_value", "path_length_factor",
                    "nodes": [...], "arcs": [...], "od_pairs": [...]},
     "coupling":   [{"tn_node", "feeder", "feeder_node", "grid_price"}, ...],
     "algo":       {AlgoParams fields..., "seed"},
     "pwl":        {"bpr_segments", "bpr_span", "coupling_breakpoints"},
     "provenance": {"tn.arcs[0].t0": "paper", ...}}

Grid prices ($/MWh) live in ``coupling`` only and are copied onto the
feeders when the file is read.  Optional fields that are absent get the
value in :data:`DEFAULTS` and the tag ``default``; numbers present in the
file without a tag are tagged ``reconstructed``.  After loading, the
provenance map names every numeric leaf, so nothing is defaulted silently.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields
from json.decoder import scanstring
from pathlib import Path as FsPath

from ..coordination.params import AlgoParams
from ..coordination.subproblem import Subproblem
from ..pdn import PdnCase, PdnLine, PdnNode, PdnVars, build_pdn_ir
from ..solve import SolveOptions
from ..tn.model import OdPair, PwlConfig, TnArc, TnCase, TnNode, TnVars, build_tn_ir
from ..tn.paths import PathSet, enumerate_paths

TAGS = ("paper", "reconstructed", "default")
TOP_KEYS = ("pdn", "tn", "coupling", "algo", "pwl", "provenance")

# Values applied to absent optional fields.  EV and station figures are not
# given with the test cases, so these are stand-ins.
DEFAULTS = {
    "feeder": {"evcs_pf_angle": math.acos(0.95)},
    "pdn_node": {"p_load": 0.0, "q_load": 0.0, "pv_p": 0.0, "has_evcs": False, "v_min": 0.81, "v_max": 1.21,
                 "evcs_p_max": 5.0},  # fmt: skip
    "tn": {"time_value": 0.5, "path_length_factor": 2.0},
    "tn_node": {"has_evcs": False, "b_max": 0.0, "pile_power": 150.0, "wait_base": 10.0, "congestion": 0.2,
                "price": 0.0, "p_max": math.inf},  # fmt: skip
    "od": {"e_max": 60.0, "e_min": 6.0, "e_0": 30.0, "beta": 0.3, "anxiety": 0.1},
    "algo": {**AlgoParams().to_dict(), "seed": 0},
    "pwl": {"bpr_segments": 8, "bpr_span": 2.0, "coupling_breakpoints": 8},
}

REQUIRED = {
    "feeder": ("name", "grid_node", "nodes", "lines"),
    "pdn_node": ("id",),
    "line": ("from_node", "to_node", "r", "x", "ell_max", "s_max"),
    "tn": ("name", "nodes", "arcs", "od_pairs"),
    "tn_node": ("id",),
    "arc": ("from_node", "to_node", "t0", "capacity", "length"),
    "od": ("origin", "dest", "demand"),
    "coupling": ("tn_node", "feeder", "feeder_node", "grid_price"),
    "algo": (),
    "pwl": (),
}

_STR = ("name", "grid_node", "id", "from_node", "to_node", "origin", "dest", "tn_node", "feeder", "feeder_node")
_BOOL = ("has_evcs",)
_INT = ("max_outer", "inner_cap", "inner_loop_fixed", "seed", "bpr_segments", "coupling_breakpoints")


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class Coupling:
    tn_node: str
    feeder: str
    feeder_node: str
    grid_price: float  # $/MWh


@dataclass
class ScenarioConfig:
    feeders: list  # PdnCase, ordered like the TN's charging stations
    tn: TnCase
    coupling: list  # Coupling
    algo: AlgoParams = field(default_factory=AlgoParams)
    pwl: PwlConfig = field(default_factory=PwlConfig)
    path_length_factor: float = 2.0
    seed: int = 0
    provenance: dict = field(default_factory=dict)  # numeric leaf path -> tag

    @property
    def name(self) -> str:
        return self.tn.name

    def validate(self):
        try:
            self.tn.check()
        except ValueError as exc:
            raise ScenarioError(str(exc)) from exc
        names = [f.name for f in self.feeders]
        if len(set(names)) != len(names):
            raise ScenarioError("feeder names must be unique")
        by_name = {f.name: f for f in self.feeders}
        for f in self.feeders:
            try:
                f.check_radial()
            except ValueError as exc:
                raise ScenarioError(str(exc)) from exc
        evcs = self.tn.evcs_nodes
        seen_tn, seen_feeder = [], []
        for c in self.coupling:
            if c.tn_node not in evcs:
                raise ScenarioError(f"coupling: TN node {c.tn_node!r} has no charging station")
            if c.feeder not in by_name:
                raise ScenarioError(f"coupling: unknown feeder {c.feeder!r}")
            feeder = by_name[c.feeder]
            if c.feeder_node not in {n.id for n in feeder.nodes}:
                raise ScenarioError(f"coupling: feeder {c.feeder!r} has no node {c.feeder_node!r}")
            if feeder.evcs_nodes != [c.feeder_node]:
                raise ScenarioError(f"coupling: feeder {c.feeder!r} must host exactly one EVCS, at {c.feeder_node!r}")
            if not (c.grid_price > 0 and math.isfinite(c.grid_price)):
                raise ScenarioError(f"coupling: grid price of feeder {c.feeder!r} must be positive")
            seen_tn.append(c.tn_node)
            seen_feeder.append(c.feeder)
        for m in evcs:
            if seen_tn.count(m) != 1:
                raise ScenarioError(f"coupling: charging station {m!r} must be supplied by exactly one feeder")
        if len(set(seen_feeder)) != len(seen_feeder) or set(seen_feeder) != set(names):
            raise ScenarioError("coupling: every feeder must supply exactly one charging station")
        order = {m: i for i, m in enumerate(evcs)}
        if [order[c.tn_node] for c in self.coupling] != list(range(len(evcs))):
            raise ScenarioError("coupling: entries must follow the TN charging-station order")
        if [c.feeder for c in self.coupling] != names:
            raise ScenarioError("feeders must be listed in coupling order")
        if not self.path_length_factor >= 1.0:
            raise ScenarioError("tn.path_length_factor must be >= 1")
        bad = {t for t in self.provenance.values() if t not in TAGS}
        if bad:
            raise ScenarioError(f"unknown provenance tags {sorted(bad)}")
        return self

    def tag_counts(self) -> dict:
        out = {t: 0 for t in TAGS}
        for t in self.provenance.values():
            out[t] += 1
        return out


# ---------------------------------------------------------------------------
# serialization


def to_dict(cfg: ScenarioConfig) -> dict:
    feeders = []
    for f in cfg.feeders:
        feeders.append({
            "name": f.name,
            "grid_node": f.grid_node,
            "evcs_pf_angle": f.evcs_pf_angle,
            "nodes": [_fields(n) for n in f.nodes],
            "lines": [_fields(ln) for ln in f.lines],
        })  # fmt: skip
    tn = {
        "name": cfg.tn.name,
        "time_value": cfg.tn.time_value,
        "path_length_factor": cfg.path_length_factor,
        "nodes": [_fields(n) for n in cfg.tn.nodes],
        "arcs": [_fields(a) for a in cfg.tn.arcs],
        "od_pairs": [_fields(od) for od in cfg.tn.od_pairs],
    }
    algo = {**cfg.algo.to_dict(), "seed": cfg.seed}
    pwl = {"bpr_segments": cfg.pwl.bpr_segments, "bpr_span": cfg.pwl.bpr_span,
           "coupling_breakpoints": cfg.pwl.coupling_breakpoints}  # fmt: skip
    return {
        "pdn": {"feeders": feeders},
        "tn": tn,
        "coupling": [_fields(c) for c in cfg.coupling],
        "algo": algo,
        "pwl": pwl,
        "provenance": dict(sorted(cfg.provenance.items())),
    }


def _fields(obj) -> dict:
    return {f.name: getattr(obj, f.name) for f in fields(obj)}


def serialize(cfg: ScenarioConfig) -> str:
    return json.dumps(to_dict(cfg), indent=1) + "\n"


def save_scenario(cfg: ScenarioConfig, path) -> None:
    FsPath(path).write_text(serialize(cfg))


def numeric_leaves(doc, prefix: str = ""):
    """Yield ``(path, value)`` for every number in a scenario document, provenance excluded."""
    if isinstance(doc, dict):
        for k, v in doc.items():
            if not prefix and k == "provenance":
                continue
            yield from numeric_leaves(v, f"{prefix}.{k}" if prefix else k)
    elif isinstance(doc, list):
        for i, v in enumerate(doc):
            yield from numeric_leaves(v, f"{prefix}[{i}]")
    elif isinstance(doc, (int, float)) and not isinstance(doc, bool):
        yield prefix, doc


# ---------------------------------------------------------------------------
# parsing with positions


def _positions(text: str) -> dict:
    """Map each value path in an already-valid JSON text to its ``(line, column)``."""
    pos: dict = {}
    dec = json.JSONDecoder()
    n = len(text)

    def ws(i):
        while i < n and text[i] in " \t\r\n":
            i += 1
        return i

    def where(i):
        line = text.count("\n", 0, i) + 1
        return line, i - (text.rfind("\n", 0, i) + 1) + 1

    def value(i, path):
        i = ws(i)
        pos[path] = where(i)
        if text[i] == "{":
            i = ws(i + 1)
            if text[i] == "}":
                return i + 1
            while True:
                key, i = scanstring(text, ws(i) + 1)
                i = ws(i) + 1  # colon
                i = ws(value(i, f"{path}.{key}" if path else key))
                if text[i] == "}":
                    return i + 1
                i += 1
        if text[i] == "[":
            i = ws(i + 1)
            if text[i] == "]":
                return i + 1
            k = 0
            while True:
                i = ws(value(i, f"{path}[{k}]"))
                k += 1
                if text[i] == "]":
                    return i + 1
                i += 1
        _, end = dec.raw_decode(text, i)
        return end

    value(0, "")
    return pos


class _Reader:
    """Pulls typed fields out of the parsed document, recording provenance."""

    def __init__(self, doc: dict, source: str, pos: dict):
        self.source = source
        self.pos = pos
        self.given = doc.get("provenance", {})
        if not isinstance(self.given, dict):
            self.fail("provenance", "must be an object")
        self.prov: dict = {}

    def fail(self, path: str, msg: str):
        line, col = self._locate(path)
        raise ScenarioError(f"{self.source}:{line}:{col}: field '{path}' {msg}")

    def _locate(self, path: str):
        while path and path not in self.pos:
            path = path.rsplit(".", 1)[0] if "." in path else ""
        return self.pos.get(path, (1, 1))

    def obj(self, d, path: str, kind: str, allowed) -> dict:
        if not isinstance(d, dict):
            self.fail(path, "must be an object")
        extra = set(d) - set(allowed)
        if extra:
            self.fail(f"{path}.{sorted(extra)[0]}", f"is not a known field of {kind}")
        for name in REQUIRED[kind]:
            if name not in d:
                self.fail(path, f"is missing required field '{name}'")
        out = {}
        defaults = DEFAULTS.get(kind, {})
        for name in allowed:
            sub = f"{path}.{name}"
            if name in d:
                out[name] = self.scalar(d[name], sub, name)
            elif name in defaults:
                out[name] = defaults[name]
                if _is_number(out[name]):
                    self.prov[sub] = "default"
        return out

    def scalar(self, v, path: str, name: str):
        if name in ("nodes", "lines", "arcs", "od_pairs"):
            return v
        if name in _STR:
            if not isinstance(v, str) or not v:
                self.fail(path, "must be a non-empty string")
            return v
        if name in _BOOL:
            if not isinstance(v, bool):
                self.fail(path, "must be true or false")
            return v
        if name in _INT:
            if v is None and name == "inner_loop_fixed":
                return None
            if isinstance(v, bool) or not isinstance(v, int):
                self.fail(path, "must be an integer")
        elif isinstance(v, bool) or not isinstance(v, (int, float)):
            self.fail(path, "must be a number")
        else:
            v = float(v)
            if math.isnan(v):
                self.fail(path, "must not be NaN")
        tag = self.given.get(path, "reconstructed")
        if tag not in TAGS:
            self.fail(f"provenance.{path}", f"has unknown tag {tag!r}")
        self.prov[path] = tag
        return v

    def items(self, d, path: str) -> list:
        if not isinstance(d, list):
            self.fail(path, "must be a list")
        return d


def _is_number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _names(cls) -> tuple:
    return tuple(f.name for f in fields(cls))


def parse_scenario(text: str, source: str = "<string>") -> ScenarioConfig:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{source}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise ScenarioError(f"{source}:1:1: scenario must be a JSON object")
    rd = _Reader(doc, source, _positions(text))
    extra = set(doc) - set(TOP_KEYS)
    if extra:
        rd.fail(sorted(extra)[0], "is not a known top-level key")
    for key in ("pdn", "tn", "coupling"):
        if key not in doc:
            raise ScenarioError(f"{source}:1:1: missing top-level key '{key}'")

    # coupling first: it carries the grid prices the feeders need
    couplings = []
    for i, c in enumerate(rd.items(doc["coupling"], "coupling")):
        couplings.append(Coupling(**rd.obj(c, f"coupling[{i}]", "coupling", _names(Coupling))))
    price = {c.feeder: c.grid_price for c in couplings}

    pdn = doc["pdn"]
    if not isinstance(pdn, dict) or set(pdn) != {"feeders"}:
        rd.fail("pdn", "must be an object with the single key 'feeders'")
    feeders = []
    for i, fd in enumerate(rd.items(pdn["feeders"], "pdn.feeders")):
        fp = f"pdn.feeders[{i}]"
        f = rd.obj(fd, fp, "feeder", ("name", "grid_node", "evcs_pf_angle", "nodes", "lines"))
        nodes = [PdnNode(**rd.obj(n, f"{fp}.nodes[{j}]", "pdn_node", _names(PdnNode)))
                 for j, n in enumerate(rd.items(f["nodes"], f"{fp}.nodes"))]  # fmt: skip
        lines = [PdnLine(**rd.obj(ln, f"{fp}.lines[{j}]", "line", _names(PdnLine)))
                 for j, ln in enumerate(rd.items(f["lines"], f"{fp}.lines"))]  # fmt: skip
        if f["name"] not in price:
            rd.fail(f"{fp}.name", "is not referenced by any coupling entry")
        feeders.append(PdnCase(f["name"], nodes, lines, f["grid_node"], price[f["name"]], f["evcs_pf_angle"]))

    t = rd.obj(doc["tn"], "tn", "tn", ("name", "time_value", "path_length_factor", "nodes", "arcs", "od_pairs"))
    tn_nodes = [TnNode(**rd.obj(n, f"tn.nodes[{j}]", "tn_node", _names(TnNode)))
                for j, n in enumerate(rd.items(t["nodes"], "tn.nodes"))]  # fmt: skip
    arcs = [TnArc(**rd.obj(a, f"tn.arcs[{j}]", "arc", _names(TnArc)))
            for j, a in enumerate(rd.items(t["arcs"], "tn.arcs"))]  # fmt: skip
    ods = [OdPair(**rd.obj(o, f"tn.od_pairs[{j}]", "od", _names(OdPair)))
           for j, o in enumerate(rd.items(t["od_pairs"], "tn.od_pairs"))]  # fmt: skip
    tn = TnCase(t["name"], tn_nodes, arcs, ods, t["time_value"])

    a = rd.obj(doc.get("algo", {}), "algo", "algo", (*_names(AlgoParams), "seed"))
    seed = a.pop("seed")
    try:
        algo = AlgoParams(**a)
    except ValueError as exc:
        rd.fail("algo", f"is invalid: {exc}")
    p = rd.obj(doc.get("pwl", {}), "pwl", "pwl", ("bpr_segments", "bpr_span", "coupling_breakpoints"))
    try:
        pwl = PwlConfig(**p)
    except ValueError as exc:
        rd.fail("pwl", f"is invalid: {exc}")

    unknown = set(rd.given) - set(rd.prov)
    if unknown:
        rd.fail("provenance", f"tags a path that is not a number in the file: {sorted(unknown)[0]!r}")
    cfg = ScenarioConfig(feeders, tn, couplings, algo, pwl, t["path_length_factor"], seed, rd.prov)
    try:
        return cfg.validate()
    except ScenarioError as exc:
        raise ScenarioError(f"{source}: {exc}") from None


def load_scenario(path) -> ScenarioConfig:
    path = FsPath(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioError(f"{path}: cannot read ({exc.strerror})") from None
    return parse_scenario(text, str(path))


# ---------------------------------------------------------------------------
# building the two agents


@dataclass
class Agents:
    pdn: Subproblem
    tn: Subproblem
    pdn_vars: PdnVars
    tn_vars: TnVars
    paths: PathSet
    config: ScenarioConfig


def build_agents(cfg: ScenarioConfig, opts: SolveOptions | None = None, convex: bool = False) -> Agents:
    """Both operator subproblems, boundary entries aligned station by station.

    With ``convex`` the TNC's binary/SOS2 pattern is frozen at its stand-alone
    optimum, which leaves a purely continuous coordination problem.
    """
    cfg.validate()
    pir, pv = build_pdn_ir(cfg.feeders)
    paths = enumerate_paths(cfg.tn, cfg.path_length_factor)
    tir, tv, paths = build_tn_ir(cfg.tn, paths, cfg.pwl)
    pdn = Subproblem(pir, "p_D", -1.0, "P-DSO", opts)
    tn = Subproblem(tir, "p_T", 1.0, "TNC", opts)
    if convex:
        tn = Subproblem(tn.fixed(tn.initial_pattern()), "p_T", 1.0, "TNC", opts)
    return Agents(pdn, tn, pv, tv, paths, cfg)
