"""Balanced (positive-sequence) reconstructions of two standard test feeders.

Impedances are converted to per unit on a 1 MVA base.  Both reconstructions
are simplifications: phase unbalance, regulators and shunt capacitors of the
originals are dropped, and loads are scaled so that EVCS demand fits.
"""

from __future__ import annotations

from ..pdn import PdnCase, PdnLine, PdnNode

FT_PER_MILE = 5280.0

# IEEE 13-node: positive-sequence impedance per configuration, ohm/mile
_CFG13 = {
    "601": (0.3465, 1.0179, 530.0),
    "602": (0.7526, 1.1814, 340.0),
    "603": (1.3294, 1.3471, 230.0),
    "604": (1.3238, 1.3569, 230.0),
    "605": (1.3292, 1.3475, 230.0),
    "606": (0.7982, 0.4463, 329.0),
    "607": (1.3425, 0.5124, 329.0),
}

_LINES13 = [
    ("650", "632", 2000.0, "601"),
    ("632", "633", 500.0, "602"),
    ("633", "634", None, "xfm"),
    ("632", "645", 500.0, "603"),
    ("645", "646", 300.0, "603"),
    ("632", "671", 2000.0, "601"),
    ("671", "684", 300.0, "604"),
    ("684", "611", 300.0, "605"),
    ("684", "652", 800.0, "607"),
    ("671", "692", None, "switch"),
    ("692", "675", 500.0, "606"),
    ("671", "680", 1000.0, "601"),
]

# kW, kvar; the distributed 632-671 load is split between its ends
_LOADS13 = {
    "632": (100.0, 58.0),
    "634": (400.0, 290.0),
    "645": (170.0, 125.0),
    "646": (230.0, 132.0),
    "652": (128.0, 86.0),
    "671": (1255.0, 718.0),
    "675": (843.0, 462.0),
    "692": (170.0, 151.0),
    "611": (170.0, 80.0),
}


def ieee13(
    name: str,
    evcs_node: str,
    grid_price: float,
    load_scale: float = 0.5,
    pv_mw: float = 0.2,
    evcs_p_max: float = 3.0,
    v_root: float = 1.1025,
    s_scale: float = 2.0,
) -> PdnCase:
    """13-node feeder at 4.16 kV with one EVCS (and its PV unit) at ``evcs_node``.

    Line ratings are the conductor ampacities scaled by ``s_scale`` so that
    the feeder can carry EVCS demand on top of its base load.
    """
    kv = 4.16
    z_base = kv * kv  # 1 MVA base
    i_base = 1000.0 / (3**0.5 * kv)
    ids = ["650", "632", "633", "634", "645", "646", "671", "684", "611", "652", "692", "675", "680"]
    if evcs_node not in ids:
        raise KeyError(evcs_node)
    nodes = []
    for nid in ids:
        p, q = _LOADS13.get(nid, (0.0, 0.0))
        lo, hi = (v_root, v_root) if nid == "650" else (0.81, 1.21)
        ev = nid == evcs_node
        nodes.append(
            PdnNode(
                nid,
                p_load=p * load_scale / 1000.0,
                q_load=q * load_scale / 1000.0,
                pv_p=pv_mw if ev else 0.0,
                has_evcs=ev,
                v_min=lo,
                v_max=hi,
                evcs_p_max=evcs_p_max,
            )
        )
    lines = []
    for a, b, length, cfg in _LINES13:
        if cfg == "xfm":
            # 500 kVA, 1.1% + j2% on its own base
            r, x, amp = 0.011 * 2.0, 0.02 * 2.0, 0.5 * 1000.0 / (3**0.5 * kv)
        elif cfg == "switch":
            r, x, amp = 1e-4, 1e-4, 530.0
        else:
            ro, xo, amp = _CFG13[cfg]
            miles = length / FT_PER_MILE
            r, x = ro * miles / z_base, xo * miles / z_base
        i_max = s_scale * amp / i_base
        s_max = i_max  # |S| = |V||I| with |V| ~ 1 pu
        lines.append(PdnLine(a, b, r, x, ell_max=i_max * i_max, s_max=s_max))
    return PdnCase(name, nodes, lines, grid_node="650", grid_price=grid_price)


# IEEE 33-bus (12.66 kV): from, to, r ohm, x ohm
_LINES33 = [
    (1, 2, 0.0922, 0.0470), (2, 3, 0.4930, 0.2511), (3, 4, 0.3660, 0.1864), (4, 5, 0.3811, 0.1941),
    (5, 6, 0.8190, 0.7070), (6, 7, 0.1872, 0.6188), (7, 8, 0.7114, 0.2351), (8, 9, 1.0300, 0.7400),
    (9, 10, 1.0440, 0.7400), (10, 11, 0.1966, 0.0650), (11, 12, 0.3744, 0.1238), (12, 13, 1.4680, 1.1550),
    (13, 14, 0.5416, 0.7129), (14, 15, 0.5910, 0.5260), (15, 16, 0.7463, 0.5450), (16, 17, 1.2890, 1.7210),
    (17, 18, 0.7320, 0.5740), (2, 19, 0.1640, 0.1565), (19, 20, 1.5042, 1.3554), (20, 21, 0.4095, 0.4784),
    (21, 22, 0.7089, 0.9373), (3, 23, 0.4512, 0.3083), (23, 24, 0.8980, 0.7091), (24, 25, 0.8960, 0.7011),
    (6, 26, 0.2030, 0.1034), (26, 27, 0.2842, 0.1447), (27, 28, 1.0590, 0.9337), (28, 29, 0.8042, 0.7006),
    (29, 30, 0.5075, 0.2585), (30, 31, 0.9744, 0.9630), (31, 32, 0.3105, 0.3619), (32, 33, 0.3410, 0.5302),
]  # fmt: skip

_LOADS33 = [
    (100, 60), (90, 40), (120, 80), (60, 30), (60, 20), (200, 100), (200, 100), (60, 20), (60, 20),
    (45, 30), (60, 35), (60, 35), (120, 80), (60, 10), (60, 20), (60, 20), (90, 40), (90, 40),
    (90, 40), (90, 40), (90, 40), (90, 50), (420, 200), (420, 200), (60, 25), (60, 25), (60, 20),
    (120, 70), (200, 600), (150, 70), (210, 100), (60, 40),
]  # fmt: skip  buses 2..33


def ieee33(
    name: str,
    evcs_node: str,
    grid_price: float,
    load_scale: float = 0.5,
    pv_mw: float = 0.2,
    evcs_p_max: float = 4.0,
    v_root: float = 1.1025,
    s_max: float = 8.0,
) -> PdnCase:
    """33-bus feeder at 12.66 kV with one EVCS (and its PV unit) at ``evcs_node``."""
    z_base = 12.66**2
    ids = [str(i) for i in range(1, 34)]
    if evcs_node not in ids:
        raise KeyError(evcs_node)
    nodes = []
    for i, nid in enumerate(ids):
        p, q = (0.0, 0.0) if i == 0 else _LOADS33[i - 1]
        lo, hi = (v_root, v_root) if nid == "1" else (0.81, 1.21)
        ev = nid == evcs_node
        nodes.append(
            PdnNode(
                nid,
                p_load=p * load_scale / 1000.0,
                q_load=q * load_scale / 1000.0,
                pv_p=pv_mw if ev else 0.0,
                has_evcs=ev,
                v_min=lo,
                v_max=hi,
                evcs_p_max=evcs_p_max,
            )
        )
    lines = [
        PdnLine(str(a), str(b), r / z_base, x / z_base, ell_max=s_max * s_max / 0.81, s_max=s_max)
        for a, b, r, x in _LINES33
    ]
    return PdnCase(name, nodes, lines, grid_node="1", grid_price=grid_price)
