"""Local solver state of one operator: its private model plus the solves Algorithm 1 asks of it."""

from __future__ import annotations

import numpy as np

from ..ir import INFEASIBLE, ITERATION_LIMIT, OPTIMAL, Pattern, ProblemIR, fix_pattern
from ..pdn import attach_augmented_objective
from ..solve import SolveOptions, solve, solve_continuous, solve_micp, solve_micp_linear

CUT_POOL_LIMIT = 4000


class SubproblemError(RuntimeError):
    pass


class Subproblem:
    """Wraps a model whose boundary group enters the Lagrangian with sign ``sign``.

    The P-DSO side uses ``sign=-1`` (``- lam . p_D``), the TNC side ``+1``.
    """

    def __init__(self, ir: ProblemIR, group: str, sign: float, name: str, opts: SolveOptions | None = None):
        if group not in ir.boundary:
            raise ValueError(f"{name}: no boundary group {group!r}")
        self.ir = ir
        self.group = group
        self.sign = float(sign)
        self.name = name
        self.opts = opts or SolveOptions()
        self.ids = list(ir.boundary[group])
        self.pool: list = []
        self.flags: list = []

    @property
    def size(self) -> int:
        return len(self.ids)

    def boundary(self, x) -> np.ndarray:
        return np.array([x[i] for i in self.ids], dtype=float)

    def cost(self, x) -> float:
        """Own operating cost (no multiplier or penalty terms)."""
        return self.ir.objective_value(x)

    def _trim_pool(self):
        if len(self.pool) > CUT_POOL_LIMIT:
            del self.pool[: len(self.pool) - CUT_POOL_LIMIT]

    def _check(self, sol, what: str):
        if sol.status == INFEASIBLE:
            raise SubproblemError(f"{self.name}: {what} is infeasible")
        if sol.status not in (OPTIMAL, ITERATION_LIMIT) or not np.all(np.isfinite(sol.values)):
            raise SubproblemError(f"{self.name}: {what} failed ({sol.status}) {sol.flagged}")
        if sol.flagged:
            self.flags.append(f"{what}: {sol.flagged}")

    def initial_pattern(self) -> Pattern:
        """Binary/SOS2 pattern of the stand-alone problem at zero multipliers."""
        sol = solve(self.ir, self.opts, self.pool)
        self._trim_pool()
        self._check(sol, "initial solve")
        return Pattern.from_values(self.ir, sol.values, self.opts.int_tol)

    def fixed(self, pattern: Pattern) -> ProblemIR:
        return fix_pattern(self.ir, pattern)

    def solve_fixed(self, fixed_ir: ProblemIR, lam, z, gamma: float):
        """Continuous augmented solve; returns ``(x, boundary, L)``."""
        aug = attach_augmented_objective(fixed_ir, self.group, lam, z, gamma, self.sign)
        sol = solve_continuous(aug, self.opts, self.pool)
        self._trim_pool()
        self._check(sol, "fixed-pattern solve")
        return sol.values, self.boundary(sol.values), aug.objective_value(sol.values)

    def lower_bound(self, lam_shift):
        """Linear-objective MICP at shifted multipliers, pattern free.

        Returns ``(phi, pattern, x)``; at a node limit the proven dual bound is
        returned, which keeps the bound valid.
        """
        aug = attach_augmented_objective(self.ir, self.group, lam_shift, np.zeros(self.size), 0.0, self.sign)
        if aug.binaries() or aug.sos2:
            sol = solve_micp_linear(aug, self.opts, self.pool)
        else:
            sol = solve_continuous(aug, self.opts, self.pool)
        self._trim_pool()
        self._check(sol, "lower-bound solve")
        phi = sol.objective if sol.status == OPTIMAL else sol.bound
        return float(phi), Pattern.from_values(self.ir, sol.values, self.opts.int_tol), sol.values

    def solve_free(self, lam, z, rho: float):
        """Augmented solve with the pattern free (MIQP); used by the ADMM baseline."""
        aug = attach_augmented_objective(self.ir, self.group, lam, z, rho, self.sign)
        if aug.binaries() or aug.sos2:
            sol = solve_micp(aug, self.opts, self.pool)
        else:
            sol = solve_continuous(aug, self.opts, self.pool)
        self._trim_pool()
        self._check(sol, "ADMM solve")
        return sol.values, self.boundary(sol.values), aug.objective_value(sol.values)
