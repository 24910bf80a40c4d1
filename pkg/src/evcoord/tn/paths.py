"""Candidate path generation for each origin-destination pair."""

from __future__ import annotations

from dataclasses import dataclass, field

import networkx as nx


class PathError(ValueError):
    pass


def node_key(nid: str):
    # numeric ids sort numerically, anything else after them as text
    return (0, int(nid), "") if nid.isdigit() else (1, 0, nid)


@dataclass(frozen=True)
class Path:
    od: int
    nodes: tuple
    length: float  # miles

    @property
    def arcs(self) -> tuple:
        return tuple(zip(self.nodes[:-1], self.nodes[1:]))

    @property
    def label(self) -> str:
        return "-".join(self.nodes)


@dataclass
class PathSet:
    paths: list = field(default_factory=list)
    by_od: dict = field(default_factory=dict)  # od index -> list of path indices

    def arc_incidence(self) -> dict:
        """Map each used arc to the indices of the paths that traverse it."""
        inc: dict = {}
        for qi, p in enumerate(self.paths):
            for a in p.arcs:
                inc.setdefault(a, []).append(qi)
        return inc

    def node_visits(self) -> dict:
        """Map each node to the indices of the paths that pass through it (endpoints included)."""
        vis: dict = {}
        for qi, p in enumerate(self.paths):
            for n in p.nodes:
                vis.setdefault(n, []).append(qi)
        return vis


def enumerate_paths(case, length_factor: float = 2.0) -> PathSet:
    """All simple paths per O-D pair, minus those without a charging station
    and those longer than ``length_factor`` times the shortest path.

    The length filter is measured against the shortest path of the whole
    graph, before the charging-station filter is applied.
    """
    g = nx.DiGraph()
    for n in case.nodes:
        g.add_node(n.id)
    for a in case.arcs:
        g.add_edge(a.from_node, a.to_node, length=a.length)
    evcs = {n.id for n in case.nodes if n.has_evcs}
    out = PathSet()
    for k, od in enumerate(case.od_pairs):
        if od.origin not in g or od.dest not in g:
            raise PathError(f"O-D {od.origin}->{od.dest}: unknown node")
        if not nx.has_path(g, od.origin, od.dest):
            raise PathError(f"O-D {od.origin}->{od.dest}: destination unreachable")
        shortest = nx.shortest_path_length(g, od.origin, od.dest, weight="length")
        raw = [tuple(p) for p in nx.all_simple_paths(g, od.origin, od.dest)]
        with_station = [p for p in raw if evcs.intersection(p[1:-1])]
        kept = []
        for p in with_station:
            length = sum(g.edges[a, b]["length"] for a, b in zip(p[:-1], p[1:]))
            if length <= length_factor * shortest + 1e-9:
                kept.append(Path(k, p, length))
        if not kept:
            raise PathError(f"O-D {od.origin}->{od.dest}: no path survives the charging-station and length filters")
        kept.sort(key=lambda p: [node_key(n) for n in p.nodes])
        out.by_od[k] = list(range(len(out.paths), len(out.paths) + len(kept)))
        out.paths.extend(kept)
    return out
