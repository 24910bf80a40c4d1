"""Convergence figures written next to the CSV output.

Only the non-interactive Agg backend is used, so this works on headless
machines.  Every figure is also fully described by trace.csv.
"""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

STYLE = {"figure.figsize": (6.0, 3.6), "axes.grid": True, "grid.alpha": 0.3, "legend.fontsize": 8, "font.size": 9}


def convergence_error(trace) -> list[float]:
    """Per-iteration error: the bound gap for the augmented-Lagrangian schemes,
    the consensus residual for ADMM (which keeps no bounds)."""
    return [float(r.gap if math.isfinite(r.phi_up) else r.residual_inf) for r in trace]


def _positive(ys):
    # log axes cannot show zeros; clamp to something visible
    return [max(y, 1e-12) if math.isfinite(y) else math.nan for y in ys]


def plot_convergence(runs: dict, path) -> Path:
    """One curve per labelled trace: convergence error against outer iteration."""
    path = Path(path)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for label, trace in runs.items():
            ks = [r.k for r in trace]
            ax.semilogy(ks, _positive(convergence_error(trace)), label=label, lw=1.2)
        ax.set_xlabel("outer iteration")
        ax.set_ylabel("convergence error")
        if runs:
            ax.legend()
        fig.tight_layout()
        fig.savefig(path, dpi=120)
        plt.close(fig)
    return path


def plot_bounds(trace, path, title: str = "") -> Path:
    """Upper and lower bounds of an augmented-Lagrangian run."""
    path = Path(path)
    rows = [r for r in trace if math.isfinite(r.phi_up) and math.isfinite(r.phi_low)]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.plot([r.k for r in rows], [r.phi_up for r in rows], label="upper bound", lw=1.2)
        ax.plot([r.k for r in rows], [r.phi_low for r in rows], label="lower bound", lw=1.2, ls="--")
        fwd = [r for r in rows if r.step_type == "forward"]
        ax.plot([r.k for r in fwd], [r.phi_low for r in fwd], "o", ms=2.5, label="forward step")
        # the first lower bounds are the large negative initial guesses; keep the interesting range
        if rows:
            hi = max(r.phi_up for r in rows)
            tail = [r.phi_low for r in rows[len(rows) // 4:]] or [rows[-1].phi_low]
            lo = min(tail)
            pad = 0.05 * max(abs(hi - lo), 1e-6 * max(1.0, abs(hi)))
            ax.set_ylim(lo - pad, hi + pad)
        ax.set_xlabel("outer iteration")
        ax.set_ylabel("cost ($)")
        if title:
            ax.set_title(title)
        ax.legend()
        fig.tight_layout()
        fig.savefig(path, dpi=120)
        plt.close(fig)
    return path


def plot_residual(trace, path) -> Path:
    """Largest boundary mismatch |p_D - p_T| per outer iteration, kW."""
    path = Path(path)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.semilogy([r.k for r in trace], _positive([r.residual_inf for r in trace]), lw=1.2)
        ax.set_xlabel("outer iteration")
        ax.set_ylabel("max |p_D - p_T| (kW)")
        fig.tight_layout()
        fig.savefig(path, dpi=120)
        plt.close(fig)
    return path


def render_run(result, out_dir) -> list[Path]:
    out_dir = Path(out_dir)
    files = [plot_convergence({result.algo: result.trace}, out_dir / "convergence.png"),
             plot_residual(result.trace, out_dir / "residual.png")]  # fmt: skip
    if result.algo != "admm":
        files.append(plot_bounds(result.trace, out_dir / "bounds.png", result.algo))
    return files
