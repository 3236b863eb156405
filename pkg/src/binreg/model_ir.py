"""Solver-agnostic representation of bounded integer linear programs.

Every variable carries finite integer bounds, every coefficient is an
integer, and evaluation uses exact integer arithmetic.  The same IR is
consumed by the MIP/PBO encoders, the LP relaxation, the branch-and-bound
solver and the file emitters.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping

__all__ = [
    "Domain",
    "Variable",
    "LinearExpr",
    "Constraint",
    "ModelIR",
    "VarId",
    "LE",
    "GE",
    "EQ",
]

# Variable ids are dense non-negative integers assigned in creation order.
VarId = int

LE = "<="
GE = ">="
EQ = "="

_SENSES = (LE, GE, EQ)


class Domain(Enum):
    BINARY = "binary"
    INTEGER = "integer"


@dataclass(frozen=True)
class Variable:
    id: VarId
    name: str
    domain: Domain
    lower: int
    upper: int


@dataclass
class LinearExpr:
    """Integer linear expression: sum of coefficient*variable plus a constant.

    Zero coefficients are never stored; use :meth:`from_terms` when building
    from possibly-cancelling term lists.
    """

    terms: dict[VarId, int] = field(default_factory=dict)
    constant: int = 0

    @classmethod
    def from_terms(cls, terms: Iterable[tuple[VarId, int]], constant: int = 0) -> "LinearExpr":
        acc: dict[VarId, int] = {}
        for vid, coef in terms:
            if coef == 0:
                continue
            new = acc.get(vid, 0) + coef
            if new == 0:
                acc.pop(vid, None)
            else:
                acc[vid] = new
        return cls(acc, constant)

    def value(self, assignment: Mapping[VarId, int]) -> int:
        total = self.constant
        for vid, coef in self.terms.items():
            total += coef * assignment[vid]
        return total

    def copy(self) -> "LinearExpr":
        return LinearExpr(dict(self.terms), self.constant)


@dataclass(frozen=True)
class Constraint:
    """Linear constraint with the expression constant folded into rhs."""

    expr: LinearExpr
    sense: str
    rhs: int
    name: str

    def satisfied_by(self, assignment: Mapping[VarId, int]) -> bool:
        lhs = self.expr.value(assignment)
        if self.sense == LE:
            return lhs <= self.rhs
        if self.sense == GE:
            return lhs >= self.rhs
        return lhs == self.rhs


class ModelIR:
    """Bounded integer linear program with a minimization objective.

    Models are built once through :meth:`add_variable`, :meth:`add_constraint`
    and :meth:`set_objective`, then treated as immutable.
    """

    def __init__(self, name: str = "model") -> None:
        self.name = name
        self.variables: list[Variable] = []
        self.constraints: list[Constraint] = []
        self.objective: LinearExpr = LinearExpr()
        self._name_to_id: dict[str, VarId] = {}

    # -- construction ------------------------------------------------------

    def add_variable(
        self,
        name: str,
        domain: Domain,
        lower: int | None = None,
        upper: int | None = None,
    ) -> VarId:
        """Register a variable and return its dense id.

        Binary variables default to bounds (0, 1); integer variables must be
        given explicit finite bounds.
        """
        if name in self._name_to_id:
            raise ValueError(f"duplicate variable name: {name!r}")
        if domain is Domain.BINARY:
            lower = 0 if lower is None else lower
            upper = 1 if upper is None else upper
            if (lower, upper) != (0, 1):
                raise ValueError(f"binary variable {name!r} must have bounds (0, 1)")
        else:
            if lower is None or upper is None:
                raise ValueError(f"integer variable {name!r} requires explicit bounds")
        if not (isinstance(lower, int) and isinstance(upper, int)):
            raise ValueError(f"bounds of {name!r} must be integers")
        if lower > upper:
            raise ValueError(f"variable {name!r} has lower bound {lower} > upper bound {upper}")
        vid = len(self.variables)
        self.variables.append(Variable(vid, name, domain, lower, upper))
        self._name_to_id[name] = vid
        return vid

    def add_constraint(self, expr: LinearExpr, sense: str, rhs: int, name: str = "") -> int:
        """Append a constraint and return its index.

        The expression constant is folded into the rhs.  Constraint names are
        advisory (collisions allowed); empty names get a default ``c<index>``.
        """
        if sense not in _SENSES:
            raise ValueError(f"unknown constraint sense: {sense!r}")
        self._check_ids(expr)
        index = len(self.constraints)
        if not name:
            name = f"c{index}"
        stored = LinearExpr(dict(expr.terms), 0)
        self.constraints.append(Constraint(stored, sense, rhs - expr.constant, name))
        return index

    def set_objective(self, expr: LinearExpr) -> None:
        self._check_ids(expr)
        self.objective = expr.copy()

    def _check_ids(self, expr: LinearExpr) -> None:
        n = len(self.variables)
        for vid in expr.terms:
            if not (0 <= vid < n):
                raise ValueError(f"unknown variable id: {vid}")

    # -- queries -----------------------------------------------------------

    @property
    def num_vars(self) -> int:
        return len(self.variables)

    def var_by_name(self, name: str) -> Variable:
        return self.variables[self._name_to_id[name]]

    def has_var(self, name: str) -> bool:
        return name in self._name_to_id

    def evaluate(
        self, assignment: Mapping[VarId, int]
    ) -> tuple[int, bool, list[int]]:
        """Exactly evaluate an integer assignment.

        Returns (objective value, feasible, indices of violated constraints).
        The assignment must cover every variable; feasibility also requires
        every value to lie within its variable's bounds.
        """
        bounds_ok = True
        for var in self.variables:
            if var.id not in assignment:
                raise ValueError(f"assignment missing variable {var.name!r}")
            value = assignment[var.id]
            if not (var.lower <= value <= var.upper):
                bounds_ok = False
        violated = [
            idx
            for idx, con in enumerate(self.constraints)
            if not con.satisfied_by(assignment)
        ]
        objective = self.objective.value(assignment)
        return objective, bounds_ok and not violated, violated
