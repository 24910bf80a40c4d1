"""Algorithm 1 (variable inner loop selection), its fixed-inner-loop variant and consensus ADMM.

Each operator runs in its own thread and owns its model, multiplier and
lower bound.  The two threads talk only through a transport endpoint, in a
fixed phase order, so the run is reproducible regardless of scheduling.  The
transportation coordinator owns the consensus update and the trace.
"""

from __future__ import annotations

import math
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..transport import BoundaryMessage, Endpoint, TransportAudit, make_pair
from .params import AlgoParams, CoordinationState, RunTrace, TraceRow
from .subproblem import Subproblem

CONVERGED = "converged"
NOT_CONVERGED = "not converged"
FORWARD = "forward"
NEUTRAL = "neutral"


class CoordinationError(RuntimeError):
    pass


def z_update(p_d, p_t) -> np.ndarray:
    """Minimizer of ``||z - p_D||^2 + ||p_T - z||^2``."""
    p_d = np.asarray(p_d, dtype=float)
    p_t = np.asarray(p_t, dtype=float)
    if p_d.shape != p_t.shape:
        raise ValueError(f"boundary vectors differ in shape: {p_d.shape} vs {p_t.shape}")
    return 0.5 * (p_d + p_t)


def upper_bound(lr: float, residual, gamma: float) -> float:
    r = np.asarray(residual, dtype=float)
    return float(lr + 0.5 * gamma * float(r @ r))


def compute_upper_bounds(state: CoordinationState, lr_p, lr_v, p_d, p_t, gamma: float):
    """Both upper bounds from the last inner pass, against the current consensus point."""
    state.phi_up_p = upper_bound(lr_p, state.z - np.asarray(p_d), gamma)
    state.phi_up_v = upper_bound(lr_v, np.asarray(p_t) - state.z, gamma)
    return state.phi_up_p, state.phi_up_v


SANDWICH_RTOL = 1e-9


def passes_quality_check(phi_up: float, phi_tilde: float, phi_low: float, rtol: float = SANDWICH_RTOL) -> bool:
    """``phi_up >= phi_tilde >= phi_low``, up to round-off relative to the bound magnitudes.

    When the fixed-pattern and free solves land on the same point the two
    sides are equal in exact arithmetic, so a strict float comparison would
    reject them on noise alone.
    """
    tol = rtol * max(1.0, abs(phi_up), abs(phi_tilde))
    return phi_up + tol >= phi_tilde >= phi_low - tol


def quality_check_update(state: CoordinationState, phi_t_p: float, phi_t_v: float, p_d, p_t, gamma: float) -> str:
    """Forward step (duals and lower bounds move) if the new bound sits between the old ones."""
    if not passes_quality_check(state.phi_up, phi_t_p + phi_t_v, state.phi_low):
        return NEUTRAL
    state.lambda_p = state.lambda_p + gamma * (state.z - np.asarray(p_d))
    state.lambda_v = state.lambda_v + gamma * (np.asarray(p_t) - state.z)
    state.phi_low_p, state.phi_low_v = phi_t_p, phi_t_v
    return FORWARD


@dataclass
class RunResult:
    algo: str
    status: str
    trace: RunTrace
    x_p: np.ndarray
    x_v: np.ndarray
    p_d: np.ndarray
    p_t: np.ndarray
    z: np.ndarray
    lambda_p: np.ndarray
    lambda_v: np.ndarray
    pdn_cost: float
    tn_cost: float
    phi_up: float
    phi_low: float
    outer: int
    inner_total: int
    wall_s: float
    audit: TransportAudit
    flags: list = field(default_factory=list)
    inner_setting: str = "adaptive"

    @property
    def converged(self) -> bool:
        return self.status == CONVERGED

    @property
    def objective(self) -> float:
        return self.pdn_cost + self.tn_cost

    @property
    def residual_inf(self) -> float:
        return float(np.max(np.abs(self.p_d - self.p_t))) if self.p_d.size else 0.0


def _delta_lr(lrs) -> float:
    return lrs[-1] - lrs[-2]


def _inner_done(j: int, lrs, params: AlgoParams) -> tuple[bool, bool]:
    """Returns ``(stop, capped)`` after ``j`` inner passes."""
    if params.inner_loop_fixed is not None:
        return j >= params.inner_loop_fixed, False
    if abs(_delta_lr(lrs)) < params.eps_u:
        return True, False
    if j >= params.inner_cap:
        return True, True
    return False, False


def _send(ep: Endpoint, sender, phase, k, j, payload):
    ep.send(BoundaryMessage(sender, phase, k, j, tuple(float(v) for v in payload)))


# ---------------------------------------------------------------------------
# augmented-Lagrangian schemes (adaptive and fixed inner loop)


def _pdso_alm(sp: Subproblem, ep: Endpoint, params: AlgoParams, n: int):
    lam = np.zeros(n)
    z = np.zeros(n)
    phi_low = params.phi_low_p0
    pattern = sp.initial_pattern()
    g = params.gamma
    for k in range(1, params.max_outer + 1):
        fixed = sp.fixed(pattern)
        lrs = [0.0]
        j = 0
        while True:
            j += 1
            x, p_d, lr_p = sp.solve_fixed(fixed, lam, z, g)
            _send(ep, "PDSO", "boundary_report", k, j, list(p_d) + [lr_p])
            msg = ep.recv("z_broadcast", k, j)
            z = np.array(msg.payload[:n])
            lr_v = msg.payload[n]
            lrs.append(lr_p + lr_v)
            stop, _ = _inner_done(j, lrs, params)
            if stop:
                break
        phi_up = upper_bound(lr_p, z - p_d, g)
        _send(ep, "PDSO", "bound_report", k, 0, [phi_up, phi_low])
        peer = ep.recv("bound_report", k, 0)
        if (phi_up + peer.payload[0]) - (phi_low + peer.payload[1]) <= params.eps:
            return dict(status=CONVERGED, x=x, lam=lam, outer=k, flags=sp.flags)
        phi_t, new_pattern, _ = sp.lower_bound(lam + g * (z - p_d))
        _send(ep, "PDSO", "binary_epoch", k, 0, [phi_t])
        peer_t = ep.recv("binary_epoch", k, 0).payload[0]
        if passes_quality_check(phi_up + peer.payload[0], phi_t + peer_t, phi_low + peer.payload[1]):
            lam = lam + g * (z - p_d)
            phi_low = phi_t
        pattern = new_pattern
    return dict(status=NOT_CONVERGED, x=x, lam=lam, outer=params.max_outer, flags=sp.flags)


def _tnc_alm(sp: Subproblem, ep: Endpoint, params: AlgoParams, n: int, trace: RunTrace):
    state = CoordinationState.initial(n, params)
    pattern = sp.initial_pattern()
    g = params.gamma
    flags = []
    for k in range(1, params.max_outer + 1):
        t_start = time.perf_counter()
        state.k = k
        fixed = sp.fixed(pattern)
        state.lr_values = [0.0]
        j = 0
        while True:
            j += 1
            x, p_t, lr_v = sp.solve_fixed(fixed, state.lambda_v, state.z, g)
            msg = ep.recv("boundary_report", k, j)
            p_d = np.array(msg.payload[:n])
            lr_p = msg.payload[n]
            state.z = z_update(p_d, p_t)
            _send(ep, "TNC", "z_broadcast", k, j, list(state.z) + [lr_v])
            state.lr_values.append(lr_p + lr_v)
            state.delta_lr = _delta_lr(state.lr_values)
            stop, capped = _inner_done(j, state.lr_values, params)
            if capped:
                flags.append(f"k={k}: inner loop stopped at the cap of {params.inner_cap} passes")
            if stop:
                break
        state.phi_up_v = upper_bound(lr_v, p_t - state.z, g)
        peer = ep.recv("bound_report", k, 0)
        state.phi_up_p = peer.payload[0]
        _send(ep, "TNC", "bound_report", k, 0, [state.phi_up_v, state.phi_low_v])
        gap = state.phi_up - (peer.payload[1] + state.phi_low_v)
        residual = float(np.max(np.abs(p_d - p_t))) if n else 0.0
        common = dict(k=k, inner_count=j, lr_p=float(lr_p), lr_v=float(lr_v), phi_up=float(state.phi_up),
                      gap=float(gap), residual_inf=residual)  # fmt: skip
        if gap <= params.eps:
            ms = 1000.0 * (time.perf_counter() - t_start)
            trace.append(TraceRow(phi_low=float(peer.payload[1] + state.phi_low_v), step_type=CONVERGED, ms=ms, **common))
            return dict(status=CONVERGED, x=x, state=state, p_d=p_d, p_t=p_t, flags=flags + sp.flags, outer=k)
        phi_t, new_pattern, _ = sp.lower_bound(state.lambda_v + g * (p_t - state.z))
        peer_t = ep.recv("binary_epoch", k, 0).payload[0]
        _send(ep, "TNC", "binary_epoch", k, 0, [phi_t])
        # the P-DSO keeps its own multiplier; this side mirrors only the shared bookkeeping
        state.phi_low_p = peer.payload[1]
        step = quality_check_update(state, peer_t, phi_t, p_d, p_t, g)
        pattern = new_pattern
        ms = 1000.0 * (time.perf_counter() - t_start)
        trace.append(TraceRow(phi_low=float(state.phi_low), step_type=step, ms=ms, **common))
    return dict(status=NOT_CONVERGED, x=x, state=state, p_d=p_d, p_t=p_t, flags=flags + sp.flags,
                outer=params.max_outer)  # fmt: skip


def _run_pair(pdso_fn, tnc_fn, transport: str, timeout):
    ep_p, ep_v, audit = make_pair(transport, timeout)
    errors = []
    abort = threading.Event()

    def guard(fn, ep):
        def run():
            try:
                return fn(ep)
            except BaseException as exc:  # surface the first failure, unblock the peer
                errors.append(exc)
                abort.set()
                ep_p.close()
                ep_v.close()
                raise
        return run

    try:
        with ThreadPoolExecutor(max_workers=2, thread_name_prefix="agent") as pool:
            fp = pool.submit(guard(pdso_fn, ep_p))
            fv = pool.submit(guard(tnc_fn, ep_v))
            try:
                rp, rv = fp.result(), fv.result()
            except BaseException:
                raise CoordinationError(f"run aborted: {errors[0]!r}" if errors else "run aborted") from (
                    errors[0] if errors else None
                )
    finally:
        ep_p.close()
        ep_v.close()
    return rp, rv, audit


def _alm_run(pdn: Subproblem, tn: Subproblem, params: AlgoParams, algo: str, transport: str, timeout):
    if pdn.size != tn.size:
        raise CoordinationError(f"boundary sizes differ: {pdn.size} P-DSO vs {tn.size} TNC")
    n = pdn.size
    trace = RunTrace()
    t0 = time.perf_counter()
    if transport == "inproc" and timeout is None:
        timeout = 3600.0  # a stuck peer should not hang forever
    rp, rv, audit = _run_pair(
        lambda ep: _pdso_alm(pdn, ep, params, n), lambda ep: _tnc_alm(tn, ep, params, n, trace), transport, timeout
    )
    st = rv["state"]
    setting = "adaptive" if params.inner_loop_fixed is None else str(params.inner_loop_fixed)
    return RunResult(
        algo=algo,
        status=rv["status"],
        trace=trace,
        x_p=rp["x"],
        x_v=rv["x"],
        p_d=rv["p_d"],
        p_t=rv["p_t"],
        z=st.z,
        lambda_p=rp["lam"],
        lambda_v=st.lambda_v,
        pdn_cost=pdn.cost(rp["x"]),
        tn_cost=tn.cost(rv["x"]),
        phi_up=st.phi_up,
        phi_low=trace.rows[-1].phi_low if trace.rows else math.nan,
        outer=rv["outer"],
        inner_total=trace.total_inner,
        wall_s=time.perf_counter() - t0,
        audit=audit,
        flags=list(rp["flags"]) + list(rv["flags"]),
        inner_setting=setting,
    )


def vils_run(pdn: Subproblem, tn: Subproblem, params: AlgoParams, transport: str = "inproc", timeout=None) -> RunResult:
    """Adaptive inner loop: repeat until the Lagrangian sum settles within ``eps_u``."""
    if params.inner_loop_fixed is not None:
        params = _replace(params, inner_loop_fixed=None)
    return _alm_run(pdn, tn, params, "vils", transport, timeout)


def sdmgs_run(pdn: Subproblem, tn: Subproblem, params: AlgoParams, transport: str = "inproc", timeout=None) -> RunResult:
    """Same outer scheme with exactly ``params.inner_loop_fixed`` inner passes."""
    if params.inner_loop_fixed is None:
        raise ValueError("sdmgs_run needs inner_loop_fixed")
    return _alm_run(pdn, tn, params, "sdmgs", transport, timeout)


def _replace(params: AlgoParams, **kw) -> AlgoParams:
    d = params.to_dict()
    d.update(kw)
    return AlgoParams(**d)


# ---------------------------------------------------------------------------
# consensus ADMM baseline


def _pdso_admm(sp: Subproblem, ep: Endpoint, params: AlgoParams, n: int):
    lam = np.zeros(n)
    z = np.zeros(n)
    rho = params.admm_rho
    for k in range(1, params.max_outer + 1):
        x, p_d, _ = sp.solve_free(lam, z, rho)
        _send(ep, "PDSO", "boundary_report", k, 1, p_d)
        msg = ep.recv("z_broadcast", k, 1)
        z = np.array(msg.payload[:n])
        lam = lam + rho * (z - p_d)
        if msg.payload[n] > 0.5:
            return dict(status=CONVERGED, x=x, lam=lam, outer=k, flags=sp.flags)
    return dict(status=NOT_CONVERGED, x=x, lam=lam, outer=params.max_outer, flags=sp.flags)


def _tnc_admm(sp: Subproblem, ep: Endpoint, params: AlgoParams, n: int, trace: RunTrace):
    lam = np.zeros(n)
    z = np.zeros(n)
    rho = params.admm_rho
    for k in range(1, params.max_outer + 1):
        t_start = time.perf_counter()
        x, p_t, lr_v = sp.solve_free(lam, z, rho)
        p_d = np.array(ep.recv("boundary_report", k, 1).payload)
        z_old = z
        z = z_update(p_d, p_t)
        primal = float(np.max(np.abs(p_d - p_t))) if n else 0.0
        dual = float(rho * np.max(np.abs(z - z_old))) if n else 0.0
        done = primal <= params.admm_tol and dual <= params.admm_tol
        _send(ep, "TNC", "z_broadcast", k, 1, list(z) + [1.0 if done else 0.0])
        lam = lam + rho * (p_t - z)
        ms = 1000.0 * (time.perf_counter() - t_start)
        trace.append(TraceRow(k, 1, math.nan, float(lr_v), math.nan, math.nan, max(primal, dual), primal,
                              CONVERGED if done else "admm", ms))  # fmt: skip
        if done:
            return dict(status=CONVERGED, x=x, lam=lam, p_d=p_d, p_t=p_t, z=z, outer=k, flags=sp.flags)
    return dict(status=NOT_CONVERGED, x=x, lam=lam, p_d=p_d, p_t=p_t, z=z, outer=params.max_outer, flags=sp.flags)


def admm_run(pdn: Subproblem, tn: Subproblem, params: AlgoParams, transport: str = "inproc", timeout=None) -> RunResult:
    """Consensus ADMM with penalty ``admm_rho``; each block solved with its pattern free."""
    if pdn.size != tn.size:
        raise CoordinationError(f"boundary sizes differ: {pdn.size} P-DSO vs {tn.size} TNC")
    n = pdn.size
    trace = RunTrace()
    t0 = time.perf_counter()
    if transport == "inproc" and timeout is None:
        timeout = 3600.0
    rp, rv, audit = _run_pair(
        lambda ep: _pdso_admm(pdn, ep, params, n),
        lambda ep: _tnc_admm(tn, ep, params, n, trace),
        transport,
        timeout,
    )
    return RunResult(
        algo="admm",
        status=rv["status"],
        trace=trace,
        x_p=rp["x"],
        x_v=rv["x"],
        p_d=rv["p_d"],
        p_t=rv["p_t"],
        z=rv["z"],
        lambda_p=rp["lam"],
        lambda_v=rv["lam"],
        pdn_cost=pdn.cost(rp["x"]),
        tn_cost=tn.cost(rv["x"]),
        phi_up=math.nan,
        phi_low=math.nan,
        outer=rv["outer"],
        inner_total=trace.total_inner,
        wall_s=time.perf_counter() - t0,
        audit=audit,
        flags=list(rp["flags"]) + list(rv["flags"]),
        inner_setting="n/a",
    )
