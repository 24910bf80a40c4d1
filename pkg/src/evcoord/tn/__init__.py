"""Transportation-network model: paths, linearizations and the TNC subproblem."""

from .linearize import (
    binary_product,
    bpr_breakpoints,
    bpr_max_error,
    bpr_time,
    linearize_ue,
    product_pwl,
    product_tolerance,
    pwl_bpr,
)
from .model import (
    OdPair,
    PwlConfig,
    TnArc,
    TnCase,
    TnCaseError,
    TnNode,
    TnVars,
    attach_augmented_objective_tn,
    build_tn_ir,
    energy_replay,
    exact_station_power,
    extract_routing,
    station_power,
    ue_certificate,
)
from .paths import Path, PathError, PathSet, enumerate_paths

__all__ = [
    "OdPair",
    "Path",
    "PathError",
    "PathSet",
    "PwlConfig",
    "TnArc",
    "TnCase",
    "TnCaseError",
    "TnNode",
    "TnVars",
    "attach_augmented_objective_tn",
    "binary_product",
    "bpr_breakpoints",
    "bpr_max_error",
    "bpr_time",
    "build_tn_ir",
    "energy_replay",
    "enumerate_paths",
    "exact_station_power",
    "extract_routing",
    "linearize_ue",
    "product_pwl",
    "product_tolerance",
    "pwl_bpr",
    "station_power",
    "ue_certificate",
]
