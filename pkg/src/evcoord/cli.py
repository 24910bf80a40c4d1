"""Command-line driver.

    evcoord run SCENARIO --algo vils --out runs/case1
    evcoord compare SCENARIO --algos vils sdmgs:1 sdmgs:8 central
    evcoord report-provenance SCENARIO

SCENARIO is ``case1``, ``case2``, ``toy`` / ``toy<seed>`` or a path to a
scenario JSON file.  ``run`` exits 0 when the run converged, 3 when it did
not, 1 on a fatal error and 2 on bad usage.  Set ``EVCOORD_LOG`` (e.g.
``INFO``) for progress logging on stderr.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from .cases import ScenarioError, build_agents, resolve_scenario, serialize
from .cases.scenario import numeric_leaves, to_dict
from .coordination import (
    CONVERGED,
    AlgoParams,
    CoordinationError,
    SubproblemError,
    admm_run,
    central_solve,
    sdmgs_run,
    vils_run,
)
from .pdn import extract_dispatch
from .tn import energy_replay, extract_routing, ue_certificate
from .transport import TransportError

EXIT_OK, EXIT_FATAL, EXIT_USAGE, EXIT_NOT_CONVERGED = 0, 1, 2, 3
ALGOS = ("vils", "admm", "sdmgs")

log = logging.getLogger("evcoord")


class UsageError(Exception):
    pass


def reported_objective(result) -> float:
    """Converged bound for the augmented-Lagrangian schemes, summed costs for ADMM.

    At convergence the upper bound differs from the lower one by at most
    ``eps``; the plain cost sum still carries the leftover boundary mismatch.
    """
    if result.algo == "admm" or not math.isfinite(result.phi_up):
        return result.objective
    return result.phi_up


def _params(cfg, args) -> AlgoParams:
    algo = cfg.algo
    if getattr(args, "max_outer", None):
        algo = replace(algo, max_outer=args.max_outer)
    return algo


def execute(agents, algo: str, params: AlgoParams, inner_loops=None, transport="inproc"):
    if algo == "vils":
        return vils_run(agents.pdn, agents.tn, params, transport)
    if algo == "sdmgs":
        if inner_loops is None:
            raise UsageError("sdmgs needs --inner-loops J")
        return sdmgs_run(agents.pdn, agents.tn, replace(params, inner_loop_fixed=inner_loops), transport)
    if algo == "admm":
        return admm_run(agents.pdn, agents.tn, params, transport)
    raise UsageError(f"unknown algorithm {algo!r}")


def solution_record(agents, result) -> dict:
    cfg = agents.config
    tn_x = np.asarray(result.x_v)
    routing = extract_routing(tn_x, agents.tn_vars, agents.paths, cfg.tn)
    stations = cfg.tn.evcs_nodes
    return {
        "scenario": cfg.name,
        "algo": result.algo,
        "inner_setting": result.inner_setting,
        "status": result.status,
        "objective": reported_objective(result),
        "pdn_cost": result.pdn_cost,
        "tn_cost": result.tn_cost,
        "phi_up": result.phi_up,
        "phi_low": result.phi_low,
        "outer": result.outer,
        "inner_total": result.inner_total,
        "boundary": {
            m: {"p_D_kw": float(result.p_d[i]), "p_T_kw": float(result.p_t[i]), "z_kw": float(result.z[i]),
                "lambda_p": float(result.lambda_p[i]), "lambda_v": float(result.lambda_v[i])}
            for i, m in enumerate(stations)
        },  # fmt: skip
        "routing": routing,
        "ue_violations": ue_certificate(tn_x, agents.tn_vars, agents.paths),
        "energy_violations": energy_replay(tn_x, agents.tn_vars, agents.paths, cfg.tn),
        "dispatch": extract_dispatch(np.asarray(result.x_p), agents.pdn_vars, cfg.feeders),
        "flags": list(result.flags),
    }


def routing_table(routing) -> str:
    rows = [r for r in routing if r["used"]]
    lines = [f"{'O-D':<8} {'path':<28} {'flow':>9}  charging at"]
    for r in rows:
        path = "-".join(f"({n})" if n in r["charge_at"] else n for n in r["path"])
        lines.append(f"{r['od']:<8} {path:<28} {r['flow']:>9.3f}  {', '.join(r['charge_at']) or '-'}")
    return "\n".join(lines)


def summary_text(agents, result, sol: dict) -> str:
    last = result.trace.rows[-1] if result.trace.rows else None
    gap = last.gap if last else math.nan
    out = [
        f"scenario: {agents.config.name}",
        f"algorithm: {result.algo}",
        f"inner-loop setting: {result.inner_setting}",
        f"converged: {'yes' if result.status == CONVERGED else 'no'}",
        f"outer iterations: {result.outer}",
        f"total inner iterations: {result.inner_total}",
        f"objective: {sol['objective']:.6f}",
        f"cost sum (PDN + TN): {result.objective:.6f}",
        f"gap: {gap:.6g}",
        f"max boundary mismatch (kW): {result.residual_inf:.6g}",
        f"wall time (s): {result.wall_s:.2f}",
        f"UE violations: {len(sol['ue_violations'])}",
        "",
        routing_table(sol["routing"]),
    ]
    if result.flags:
        out += ["", "flags:"] + [f"  {f}" for f in result.flags]
    return "\n".join(out) + "\n"


def write_run(out: Path, agents, result, plots: bool = True) -> list[Path]:
    out.mkdir(parents=True, exist_ok=True)
    sol = solution_record(agents, result)
    (out / "trace.csv").write_text(result.trace.to_csv())
    (out / "solution.json").write_text(json.dumps(sol, indent=1, default=_json_default) + "\n")
    (out / "summary.txt").write_text(summary_text(agents, result, sol))
    (out / "scenario.json").write_text(serialize(agents.config))
    files = [out / "trace.csv", out / "solution.json", out / "summary.txt", out / "scenario.json"]
    if plots:
        from .plotting import render_run

        files += render_run(result, out)
    return files


def _json_default(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    raise TypeError(type(v).__name__)


def cmd_run(args) -> int:
    if args.algo == "sdmgs" and args.inner_loops is None:
        raise UsageError("--algo sdmgs needs --inner-loops J")
    cfg = resolve_scenario(args.scenario, args.seed)
    agents = build_agents(cfg, convex=args.convex)
    log.info("running %s on %s", args.algo, cfg.name)
    result = execute(agents, args.algo, _params(cfg, args), args.inner_loops, args.transport)
    files = write_run(Path(args.out), agents, result, plots=not args.no_plots)
    sys.stdout.write((Path(args.out) / "summary.txt").read_text())
    log.info("wrote %s", ", ".join(str(f) for f in files))
    return EXIT_OK if result.status == CONVERGED else EXIT_NOT_CONVERGED


def parse_algo(spec: str):
    """``vils``, ``admm``, ``central``, ``sdmgs:J`` (or ``sdmgsJ``)."""
    s = spec.strip().lower()
    if s in ("vils", "admm", "central"):
        return s, None
    for prefix in ("sdmgs:", "sdmgs"):
        if s.startswith(prefix) and s[len(prefix):].isdigit() and int(s[len(prefix):]) >= 1:
            return "sdmgs", int(s[len(prefix):])
    raise UsageError(f"unknown algorithm {spec!r} (use vils, admm, central or sdmgs:J)")


COMPARE_COLUMNS = ("algorithm", "inner_loops", "total_inner", "total_outer", "converged", "objective", "time_s")


def compare_rows(agents, specs, params: AlgoParams, transport="inproc"):
    rows, traces = [], {}
    for spec in specs:
        algo, j = parse_algo(spec)
        if algo == "central":
            t0 = time.perf_counter()
            c = central_solve(agents.pdn, agents.tn)
            rows.append(dict(algorithm="central", inner_loops="n/a", total_inner="n/a", total_outer="n/a",
                             converged="yes" if c.status == "optimal" else "no", objective=c.objective,
                             time_s=time.perf_counter() - t0))  # fmt: skip
            continue
        r = execute(agents, algo, params, j, transport)
        label = algo if j is None else f"{algo} J={j}"
        traces[label] = r.trace
        conv = r.status == CONVERGED
        rows.append(dict(algorithm=algo, inner_loops=r.inner_setting, total_inner=r.inner_total, total_outer=r.outer,
                         converged="yes" if conv else "no", objective=reported_objective(r) if conv else math.nan,
                         time_s=r.wall_s))  # fmt: skip
    return rows, traces


def format_table(rows) -> str:
    def cell(v):
        if isinstance(v, float):
            return "n/a" if math.isnan(v) else f"{v:.4f}" if abs(v) < 1e6 else f"{v:.6g}"
        return str(v)

    cells = [list(COMPARE_COLUMNS)] + [[cell(r[c]) for c in COMPARE_COLUMNS] for r in rows]
    widths = [max(len(row[i]) for row in cells) for i in range(len(COMPARE_COLUMNS))]
    return "\n".join("  ".join(v.rjust(w) for v, w in zip(row, widths)) for row in cells) + "\n"


def objective_spread(rows) -> float:
    """Largest relative difference among the objectives of converged rows."""
    vals = [r["objective"] for r in rows if r["converged"] == "yes" and math.isfinite(r["objective"])]
    if len(vals) < 2:
        return 0.0
    return (max(vals) - min(vals)) / max(abs(min(vals)), 1e-12)


def cmd_compare(args) -> int:
    specs = args.algos
    for s in specs:
        parse_algo(s)
    cfg = resolve_scenario(args.scenario, args.seed)
    agents = build_agents(cfg, convex=args.convex)
    rows, traces = compare_rows(agents, specs, _params(cfg, args), args.transport)
    table = format_table(rows)
    spread = objective_spread(rows)
    text = table + f"\nrelative objective spread among converged runs: {spread:.3g} (eps = {cfg.algo.eps:g})\n"
    sys.stdout.write(text)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=COMPARE_COLUMNS, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
        (out / "comparison.csv").write_text(buf.getvalue())
        (out / "comparison.txt").write_text(text)
        for label, tr in traces.items():
            (out / f"trace_{label.replace(' ', '_').replace('=', '')}.csv").write_text(tr.to_csv())
        if traces and not args.no_plots:
            from .plotting import plot_convergence

            plot_convergence(traces, out / "convergence.png")
    return EXIT_OK


def provenance_report(cfg) -> str:
    values = dict(numeric_leaves(to_dict(cfg)))
    width = max((len(p) for p in values), default=10)
    lines = [f"{p:<{width}}  {cfg.provenance.get(p, '?'):<13}  {v!r}" for p, v in values.items()]
    counts = cfg.tag_counts()
    lines.append("")
    lines.append("  ".join(f"{t}: {n}" for t, n in counts.items()))
    return "\n".join(lines) + "\n"


def cmd_provenance(args) -> int:
    cfg = resolve_scenario(args.scenario, args.seed)
    text = provenance_report(cfg)
    if args.tag:
        keep = [ln for ln in text.splitlines() if len(ln.split()) == 3 and ln.split()[1] == args.tag]
        text = "\n".join(keep) + "\n"
    sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="evcoord", description="Decentralized PDN/TN coordination experiments.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("scenario", help="case1, case2, toy, toy<seed> or a scenario JSON file")
        sp.add_argument("--seed", type=int, default=None, help="toy seed when SCENARIO is 'toy'")

    r = sub.add_parser("run", help="run one algorithm and write trace, solution and summary")
    common(r)
    r.add_argument("--algo", choices=ALGOS, default="vils")
    r.add_argument("--inner-loops", type=int, default=None, metavar="J", help="fixed inner passes (sdmgs)")
    r.add_argument("--transport", choices=("inproc", "tcp"), default="inproc")
    r.add_argument("--out", required=True, help="output directory")
    r.add_argument("--max-outer", type=int, default=None, metavar="K")
    r.add_argument("--convex", action="store_true", help="freeze the TN binaries at their stand-alone optimum")
    r.add_argument("--no-plots", action="store_true")
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("compare", help="run several algorithms and tabulate them")
    common(c)
    c.add_argument("--algos", nargs="+", default=["vils", "sdmgs:1", "sdmgs:8", "central"])
    c.add_argument("--transport", choices=("inproc", "tcp"), default="inproc")
    c.add_argument("--out", default=None)
    c.add_argument("--max-outer", type=int, default=None, metavar="K")
    c.add_argument("--convex", action="store_true")
    c.add_argument("--no-plots", action="store_true")
    c.set_defaults(func=cmd_compare)

    v = sub.add_parser("report-provenance", help="list every number with its provenance tag")
    common(v)
    v.add_argument("--tag", choices=("paper", "reconstructed", "default"), default=None)
    v.set_defaults(func=cmd_provenance)
    return p


def main(argv=None) -> int:
    level = os.environ.get("EVCOORD_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "inner_loops", None) is not None and args.inner_loops < 1:
        parser.error("--inner-loops must be >= 1")
    if getattr(args, "max_outer", None) is not None and args.max_outer < 1:
        parser.error("--max-outer must be >= 1")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.error(str(exc))
    except (ScenarioError, CoordinationError, SubproblemError, TransportError, OSError) as exc:
        print(f"evcoord: error: {exc}", file=sys.stderr)
        return EXIT_FATAL
    return EXIT_FATAL


if __name__ == "__main__":
    sys.exit(main())
