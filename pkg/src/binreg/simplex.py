"""LP relaxation of a ModelIR, used for dual bounds in branch-and-bound.

Binaries relax to [0,1] and integers to their declared bounds.  Solving is
delegated to a bounded dual simplex (scipy's HiGHS backend, single thread,
deterministic); the constraint matrix is assembled once per model and only
variable bounds change between node solves.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from .model_ir import EQ, GE, LE, ModelIR, VarId

__all__ = [
    "TOL_FEAS",
    "TOL_OPT",
    "TOL_INT",
    "LpResult",
    "LpSolveError",
    "LpRelaxation",
    "solve_lp",
]

TOL_FEAS = 1e-7  # primal feasibility
TOL_OPT = 1e-9  # dual feasibility / reduced costs
TOL_INT = 1e-6  # integrality threshold used by the brancher

STATUS_OPTIMAL = "Optimal"
STATUS_INFEASIBLE = "Infeasible"
STATUS_UNBOUNDED = "Unbounded"


class LpSolveError(RuntimeError):
    """Numerical failure in the LP backend; never reported as a status."""


@dataclass
class LpResult:
    """Outcome of one relaxation solve.

    ``values`` is a dense array indexed by VarId (present only when Optimal).
    ``objective`` includes the model's objective constant; it is +inf for
    infeasible and -inf for unbounded models.
    """

    status: str
    values: np.ndarray | None
    objective: float
    iterations: int


class LpRelaxation:
    """Reusable LP form of a model: matrix fixed, bounds swapped per solve."""

    def __init__(self, model: ModelIR):
        self.model = model
        n = model.num_vars
        self.lower = np.array([v.lower for v in model.variables], dtype=np.float64)
        self.upper = np.array([v.upper for v in model.variables], dtype=np.float64)
        self.cost = np.zeros(n)
        for vid, coef in model.objective.terms.items():
            self.cost[vid] = coef
        self.obj_constant = float(model.objective.constant)

        ub_rows: list[tuple[int, int, int]] = []  # (row, col, coef), sense <=
        ub_rhs: list[float] = []
        eq_rows: list[tuple[int, int, int]] = []
        eq_rhs: list[float] = []
        for con in model.constraints:
            if con.sense == EQ:
                row = len(eq_rhs)
                eq_rhs.append(con.rhs)
                for vid, coef in con.expr.terms.items():
                    eq_rows.append((row, vid, coef))
            else:
                # >= rows are negated into <= form
                sign = 1 if con.sense == LE else -1
                row = len(ub_rhs)
                ub_rhs.append(sign * con.rhs)
                for vid, coef in con.expr.terms.items():
                    ub_rows.append((row, vid, sign * coef))
        self.A_ub = self._matrix(ub_rows, len(ub_rhs), n)
        self.b_ub = np.array(ub_rhs) if ub_rhs else None
        self.A_eq = self._matrix(eq_rows, len(eq_rhs), n)
        self.b_eq = np.array(eq_rhs) if eq_rhs else None

    @staticmethod
    def _matrix(triplets, nrows, ncols):
        if not nrows:
            return None
        rows = np.array([t[0] for t in triplets])
        cols = np.array([t[1] for t in triplets])
        data = np.array([t[2] for t in triplets], dtype=np.float64)
        return sparse.csr_matrix((data, (rows, cols)), shape=(nrows, ncols))

    def solve(self, overrides: Mapping[VarId, tuple[int, int]] | None = None) -> LpResult:
        lower = self.lower
        upper = self.upper
        if overrides:
            lower = lower.copy()
            upper = upper.copy()
            for vid, (lo, up) in overrides.items():
                if lo < self.lower[vid] or up > self.upper[vid] or lo > up:
                    raise ValueError(
                        f"override ({lo}, {up}) outside original bounds of variable {vid}"
                    )
                lower[vid] = lo
                upper[vid] = up
        res = linprog(
            self.cost,
            A_ub=self.A_ub,
            b_ub=self.b_ub,
            A_eq=self.A_eq,
            b_eq=self.b_eq,
            bounds=np.column_stack([lower, upper]),
            method="highs-ds",
            options={
                "presolve": True,
                "primal_feasibility_tolerance": TOL_FEAS,
                "dual_feasibility_tolerance": TOL_OPT,
            },
        )
        iterations = int(getattr(res, "nit", 0) or 0)
        if res.status == 0:
            return LpResult(
                STATUS_OPTIMAL, res.x, float(res.fun) + self.obj_constant, iterations
            )
        if res.status == 2:
            return LpResult(STATUS_INFEASIBLE, None, float("inf"), iterations)
        if res.status == 3:
            return LpResult(STATUS_UNBOUNDED, None, float("-inf"), iterations)
        raise LpSolveError(f"LP backend failure (status {res.status}): {res.message}")


def solve_lp(
    model: ModelIR, overrides: Mapping[VarId, tuple[int, int]] | None = None
) -> LpResult:
    """One-shot relaxation solve; see LpRelaxation for repeated solves."""
    return LpRelaxation(model).solve(overrides)
