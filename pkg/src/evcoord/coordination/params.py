"""Algorithm parameters, coordination state and the per-iteration trace."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np

TRACE_COLUMNS = ("k", "inner_count", "lr_p", "lr_v", "phi_up", "phi_low", "gap", "residual_inf", "step_type", "ms")


@dataclass(frozen=True)
class AlgoParams:
    eps: float = 6e-3
    eps_u: float = 1e-1
    gamma: float = 4e-6
    max_outer: int = 300
    inner_loop_fixed: int | None = None
    admm_rho: float = 1e-4
    admm_tol: float = 1e-3  # primal and dual residual target, kW
    inner_cap: int = 100
    phi_low_p0: float = -9999.0
    phi_low_v0: float = -99999.0

    def __post_init__(self):
        for name in ("eps", "eps_u", "gamma", "admm_rho", "admm_tol"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise ValueError(f"{name} must be positive and finite")
        if self.max_outer < 1:
            raise ValueError("max_outer must be >= 1")
        if self.inner_cap < 1:
            raise ValueError("inner_cap must be >= 1")
        if self.inner_loop_fixed is not None and self.inner_loop_fixed < 1:
            raise ValueError("inner_loop_fixed must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "AlgoParams":
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown algorithm parameters: {sorted(extra)}")
        return cls(**d)


@dataclass
class CoordinationState:
    """Everything Algorithm 1 carries between outer iterations, viewed from outside the agents."""

    k: int
    z: np.ndarray
    lambda_p: np.ndarray
    lambda_v: np.ndarray
    phi_low_p: float
    phi_low_v: float
    phi_up_p: float = math.nan
    phi_up_v: float = math.nan
    lr_values: list = field(default_factory=lambda: [0.0])
    delta_lr: float = math.inf

    @classmethod
    def initial(cls, n: int, params: AlgoParams) -> "CoordinationState":
        return cls(0, np.zeros(n), np.zeros(n), np.zeros(n), params.phi_low_p0, params.phi_low_v0)

    @property
    def phi_low(self) -> float:
        return self.phi_low_p + self.phi_low_v

    @property
    def phi_up(self) -> float:
        return self.phi_up_p + self.phi_up_v


@dataclass(frozen=True)
class TraceRow:
    k: int
    inner_count: int
    lr_p: float
    lr_v: float
    phi_up: float
    phi_low: float
    gap: float
    residual_inf: float
    step_type: str
    ms: float


@dataclass
class RunTrace:
    rows: list = field(default_factory=list)

    def append(self, row: TraceRow):
        self.rows.append(row)

    def __len__(self):
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)

    @property
    def total_inner(self) -> int:
        return sum(r.inner_count for r in self.rows)

    def to_csv(self, include_time: bool = True) -> str:
        cols = TRACE_COLUMNS if include_time else TRACE_COLUMNS[:-1]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        for r in self.rows:
            w.writerow([_fmt(getattr(r, c)) for c in cols])
        return buf.getvalue()


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v
