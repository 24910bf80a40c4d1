"""Small random instances for oracle comparisons.

A toy has one O-D pair and one or two charging stations, each supplied by its
own two-node feeder (so two to four feeder nodes in all).  Every path is
``O -> S -> D`` or ``O -> S -> X -> D``; depending on the drawn lengths its
vehicles must, or merely may, recharge at the station.  Segment counts are kept low so that the full
binary/SOS2 pattern space stays enumerable.
"""

from __future__ import annotations

import numpy as np

from ..pdn import PdnCase, PdnLine, PdnNode
from ..tn.model import OdPair, PwlConfig, TnArc, TnCase, TnNode

E_MAX = 60.0
BETA = 0.2


def toy_case(seed: int, n_paths: int | None = None, n_stations: int | None = None):
    """Return ``(feeders, tn_case, pwl)`` for a reproducible random toy."""
    rng = np.random.default_rng(seed)
    n_paths = n_paths or int(rng.integers(2, 4))
    n_stations = n_stations or int(rng.integers(1, 3))
    n_stations = min(n_stations, n_paths)
    demand = float(rng.integers(20, 41))
    stations = [f"S{i}" for i in range(n_stations)]
    extra = [f"X{i}" for i in range(n_paths - n_stations)]

    prices = {s: float(rng.uniform(60.0, 95.0)) for s in stations}
    nodes = [TnNode("O"), TnNode("D")]
    for s in stations:
        nodes.append(TnNode(s, has_evcs=True, b_max=E_MAX, pile_power=float(rng.uniform(50, 150)),
                            wait_base=float(rng.uniform(2, 8)), congestion=float(rng.uniform(0.05, 0.3)),
                            price=prices[s] / 1000.0, p_max=5000.0))  # fmt: skip
    nodes += [TnNode(x) for x in extra]

    def arc(a, b, d):
        return TnArc(a, b, float(rng.uniform(0.3, 0.5)) * d, float(rng.uniform(0.5, 1.0)) * demand, d)

    # a full battery less the 12 kWh reserve covers 210 miles, so paths of 120-400 miles
    # recharge by necessity or by choice depending on the draw
    arcs = []
    for s in stations:
        arcs.append(arc("O", s, float(rng.uniform(60, 200))))
        arcs.append(arc(s, "D", float(rng.uniform(60, 200))))
    for x in extra:
        d = float(rng.uniform(60, 200))
        share = float(rng.uniform(0.3, 0.7))
        arcs.append(arc(stations[0], x, share * d))
        arcs.append(arc(x, "D", (1.0 - share) * d))
    od = OdPair("O", "D", demand, e_max=E_MAX, e_min=6.0, e_0=0.9 * E_MAX, beta=BETA, anxiety=0.1)
    tn = TnCase(f"toy{seed}", nodes, arcs, [od], time_value=float(rng.uniform(0.3, 0.7)))

    feeders = []
    for s in stations:
        r, x = float(rng.uniform(0.002, 0.02)), float(rng.uniform(0.002, 0.02))
        load = PdnNode("1", p_load=float(rng.uniform(0.1, 0.5)), q_load=float(rng.uniform(0.0, 0.2)), pv_p=0.2,
                       has_evcs=True, evcs_p_max=3.0)  # fmt: skip
        feeders.append(
            PdnCase(f"F{s}", [PdnNode("0", v_min=1.0, v_max=1.0), load],
                    [PdnLine("0", "1", r, x, ell_max=25.0, s_max=5.0)], grid_node="0", grid_price=prices[s])
        )  # fmt: skip
    # one BPR segment (chord) keeps the pattern count small; coupling squares get two segments
    # when there is room for them within the decision budget
    coupling_bp = 3 if n_paths == 2 else 2
    return feeders, tn, PwlConfig(bpr_segments=1, bpr_span=2.0, coupling_breakpoints=coupling_bp)
