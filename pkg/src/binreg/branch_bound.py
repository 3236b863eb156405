"""Exact branch-and-bound over ModelIR, plus an exhaustive test oracle.

Node relaxations come from the simplex module; because every objective
coefficient and variable is integral, each node's LP bound lifts to
ceil(lp_obj) and all incumbent/bound comparisons are exact integer
arithmetic.  Node selection is best-bound with depth-first plunging;
branching picks the most fractional binary first (ties by lowest variable
id), falling back to the most fractional general integer when all binaries
are integral.
"""

from __future__ import annotations

import heapq
import math
import sys
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .model_ir import EQ, GE, LE, Domain, ModelIR, VarId
from .simplex import LpRelaxation, LpSolveError, TOL_INT

__all__ = [
    "SolveConfig",
    "MipResult",
    "solve",
    "brute_force_oracle",
    "relative_gap",
]

STATUS_OPTIMAL = "Optimal"
STATUS_FEASIBLE_TIMEOUT = "FeasibleTimeout"
STATUS_INFEASIBLE_PROVEN = "InfeasibleProven"
STATUS_NO_SOLUTION_TIMEOUT = "NoSolutionTimeout"

# absolute guard when lifting float LP objectives to integer bounds
_LIFT_GUARD = 1e-6
# consecutive dive steps before returning to best-bound selection
_PLUNGE_LIMIT = 64


@dataclass(frozen=True)
class SolveConfig:
    """Solver limits.  seed is reserved for randomized strategies; the
    current branching and node-selection rules are fully deterministic."""

    time_limit_secs: float = 3600.0
    gap_tolerance: float = 0.0
    node_limit: int | None = None
    seed: int = 0
    log_interval_secs: float = 0.0  # 0 disables progress lines

    def __post_init__(self):
        if self.time_limit_secs <= 0:
            raise ValueError("time limit must be positive")
        if self.gap_tolerance < 0:
            raise ValueError("gap tolerance must be non-negative")


@dataclass
class MipResult:
    """Solve outcome: the quantities reported per run (gap, runtime, nodes).

    ``bound_trace`` records (elapsed_secs, dual bound) every time the global
    bound improves; it is non-decreasing for a minimization.
    """

    status: str
    incumbent: dict[VarId, int] | None
    objective: int | None
    bound: float
    gap: float
    runtime_secs: float
    nodes: int
    bound_trace: list[tuple[float, float]] = field(default_factory=list)


def relative_gap(objective: int | float | None, bound: float) -> float:
    """|objective - bound| / max(1, |objective|); inf without an incumbent."""
    if objective is None or not math.isfinite(bound):
        return math.inf
    return abs(objective - bound) / max(1.0, abs(objective))


Heuristic = Callable[[np.ndarray], "dict[VarId, int] | None"]


def solve(model: ModelIR, cfg: SolveConfig, heuristic: Heuristic | None = None) -> MipResult:
    """Minimize the model exactly within the configured limits.

    ``heuristic`` maps a node's relaxation values to a candidate integer
    assignment (or None); candidates are verified exactly before adoption.
    All failure modes are statuses, never exceptions.
    """
    start = time.monotonic()
    lp = LpRelaxation(model)
    variables = model.variables
    is_binary = np.array([v.domain is Domain.BINARY for v in variables])

    incumbent: dict[VarId, int] | None = None
    inc_obj: int | None = None
    nodes = 0
    seq = 0
    heap: list[tuple[float, int, dict]] = []  # (bound, seq, overrides)
    dive: tuple[float, dict] | None = None
    dive_steps = 0
    processing: float | None = None  # bound of the node being expanded
    bound_trace: list[tuple[float, float]] = []
    last_trace = -math.inf
    next_log = 0.0

    def elapsed() -> float:
        return time.monotonic() - start

    def global_bound() -> float:
        g = math.inf
        if heap:
            g = min(g, heap[0][0])
        if dive is not None:
            g = min(g, dive[0])
        if processing is not None:
            g = min(g, processing)
        if inc_obj is not None:
            g = min(g, float(inc_obj))
        return g

    def record_bound() -> None:
        # called when the current node is fully resolved (children pushed,
        # pruned, fathomed or infeasible)
        nonlocal last_trace, processing
        processing = None
        g = global_bound()
        if g > last_trace and math.isfinite(g):
            last_trace = g
            bound_trace.append((elapsed(), g))

    def maybe_log(force: bool = False) -> None:
        nonlocal next_log
        if cfg.log_interval_secs <= 0:
            return
        t = elapsed()
        if not force and t < next_log:
            return
        next_log = t + cfg.log_interval_secs
        g = global_bound()
        inc_text = str(inc_obj) if inc_obj is not None else "-"
        gap = relative_gap(inc_obj, g)
        print(
            f"nodes={nodes} inc={inc_text} bnd={g:.6g} gap={gap:.6g} t={t:.1f}",
            file=sys.stderr,
        )

    def try_incumbent(assignment: dict[VarId, int]) -> tuple[bool, bool]:
        """Exact check of a candidate; returns (feasible, improved)."""
        nonlocal incumbent, inc_obj
        obj, feasible, _ = model.evaluate(assignment)
        if not feasible:
            return False, False
        if inc_obj is None or obj < inc_obj:
            incumbent = assignment
            inc_obj = obj
            maybe_log(force=True)
            return True, True
        return True, False

    def finish(status: str) -> MipResult:
        bound = global_bound()
        gap = relative_gap(inc_obj, bound)
        if status == STATUS_OPTIMAL and gap > cfg.gap_tolerance:
            # unreachable by construction; keep the contract honest
            status = STATUS_FEASIBLE_TIMEOUT
        maybe_log(force=True)
        return MipResult(
            status=status,
            incumbent=incumbent,
            objective=inc_obj,
            bound=bound,
            gap=gap,
            runtime_secs=elapsed(),
            nodes=nodes,
            bound_trace=bound_trace,
        )

    def first_unfixed(overrides: dict) -> VarId | None:
        for v in variables:
            lo, up = overrides.get(v.id, (v.lower, v.upper))
            if lo < up:
                return v.id
        return None

    heapq.heappush(heap, (-math.inf, seq, {}))
    seq += 1

    while True:
        processing = None
        if inc_obj is not None:
            g = global_bound()
            if g >= inc_obj or relative_gap(inc_obj, g) <= cfg.gap_tolerance:
                return finish(STATUS_OPTIMAL)
        if elapsed() > cfg.time_limit_secs:
            if dive is not None:
                heapq.heappush(heap, (dive[0], seq, dive[1]))
                seq += 1
                dive = None
            return finish(
                STATUS_FEASIBLE_TIMEOUT if incumbent else STATUS_NO_SOLUTION_TIMEOUT
            )
        if cfg.node_limit is not None and nodes >= cfg.node_limit:
            if dive is not None:
                heapq.heappush(heap, (dive[0], seq, dive[1]))
                seq += 1
                dive = None
            return finish(
                STATUS_FEASIBLE_TIMEOUT if incumbent else STATUS_NO_SOLUTION_TIMEOUT
            )

        if dive is not None and dive_steps < _PLUNGE_LIMIT:
            parent_bound, overrides = dive
            dive = None
            dive_steps += 1
        else:
            if dive is not None:
                heapq.heappush(heap, (dive[0], seq, dive[1]))
                seq += 1
                dive = None
            dive_steps = 0
            while heap and inc_obj is not None and heap[0][0] >= inc_obj:
                heapq.heappop(heap)
            if not heap:
                if incumbent is not None:
                    return finish(STATUS_OPTIMAL)
                return finish(STATUS_INFEASIBLE_PROVEN)
            parent_bound, _, overrides = heapq.heappop(heap)

        if inc_obj is not None and parent_bound >= inc_obj:
            continue
        processing = parent_bound

        maybe_log()
        try:
            res = lp.solve(overrides)
        except LpSolveError:
            nodes += 1
            # no usable relaxation: split on any unfixed variable to stay exact
            vid = first_unfixed(overrides)
            if vid is None:
                point = {
                    v.id: int(overrides.get(v.id, (v.lower, v.upper))[0])
                    for v in variables
                }
                try_incumbent(point)
                record_bound()
                continue
            lo, up = overrides.get(vid, (variables[vid].lower, variables[vid].upper))
            mid = (lo + up) // 2
            left = dict(overrides)
            left[vid] = (lo, mid)
            right = dict(overrides)
            right[vid] = (mid + 1, up)
            for child in (left, right):
                heapq.heappush(heap, (parent_bound, seq, child))
                seq += 1
            record_bound()
            continue
        nodes += 1

        if res.status == "Infeasible":
            record_bound()
            continue
        lifted = math.ceil(res.objective - _LIFT_GUARD)
        node_bound = max(float(lifted), parent_bound)
        processing = node_bound
        if inc_obj is not None and node_bound >= inc_obj:
            record_bound()
            continue

        values = res.values
        fractionality = np.abs(values - np.round(values))
        fractional = fractionality > TOL_INT

        if not fractional.any():
            assignment = {v.id: int(round(values[v.id])) for v in variables}
            feasible, _ = try_incumbent(assignment)
            if feasible:
                # improving or not, the node's integral optimum closes it
                record_bound()
                continue
            # numerically integral yet exactly infeasible: split to refine
            vid = first_unfixed(overrides)
            if vid is None:
                record_bound()
                continue
            lo, up = overrides.get(vid, (variables[vid].lower, variables[vid].upper))
            mid = int(min(max(math.floor(values[vid]), lo), up - 1))
            left = dict(overrides)
            left[vid] = (lo, mid)
            right = dict(overrides)
            right[vid] = (mid + 1, up)
            for child in (left, right):
                heapq.heappush(heap, (node_bound, seq, child))
                seq += 1
            record_bound()
            continue

        if heuristic is not None:
            candidate = heuristic(values)
            if candidate is not None:
                try_incumbent(candidate)
                if inc_obj is not None and node_bound >= inc_obj:
                    record_bound()
                    continue

        # most fractional binary first, ties by lowest id
        frac_part = values - np.floor(values)
        score = np.minimum(frac_part, 1.0 - frac_part)
        score[~fractional] = -1.0
        bin_scores = np.where(is_binary, score, -1.0)
        if bin_scores.max() > 0:
            branch_var = int(bin_scores.argmax())
        else:
            branch_var = int(score.argmax())
        lo, up = overrides.get(
            branch_var, (variables[branch_var].lower, variables[branch_var].upper)
        )
        split = math.floor(values[branch_var])
        split = int(min(max(split, lo), up - 1))
        down = dict(overrides)
        down[branch_var] = (lo, split)
        up_child = dict(overrides)
        up_child[branch_var] = (split + 1, up)
        prefer_up = frac_part[branch_var] >= 0.5
        preferred, other = (up_child, down) if prefer_up else (down, up_child)
        heapq.heappush(heap, (node_bound, seq, other))
        seq += 1
        dive = (node_bound, preferred)
        record_bound()


# -- exhaustive oracle --------------------------------------------------------


def brute_force_oracle(
    model: ModelIR,
    enumerable_vars: Sequence[VarId],
    cap: int = 10_000_000,
    chunk: int = 250_000,
) -> tuple[int, dict[VarId, int]]:
    """Exact optimum by exhaustive search with integer arithmetic.

    Enumerates the given variables (mutually exclusive binary pairs, detected
    from x + y <= 1 rows, are compressed to three joint states).  Every other
    variable must be fixed by its bounds, determined by a chain of equalities,
    determined by the optimal-slack rule (a pair p, m appearing only in rows
    p - m <= t with objective coefficients -a*p + b*m, b >= a > 0), or
    unconstrained.  Raises ValueError when the search space exceeds ``cap``,
    when some variable cannot be determined, or when no feasible point exists.
    """
    plan = _OraclePlan(model, enumerable_vars, cap)
    best_obj: int | None = None
    best_index: int | None = None
    total = plan.combo_count
    for start in range(0, total, chunk):
        stop = min(start + chunk, total)
        idx = np.arange(start, stop, dtype=np.int64)
        obj, feasible = plan.evaluate_chunk(idx)
        if not feasible.any():
            continue
        masked = np.where(feasible, obj, np.iinfo(np.int64).max)
        local = int(masked.argmin())
        local_obj = int(masked[local])
        if best_obj is None or local_obj < best_obj:
            best_obj = local_obj
            best_index = start + local
    if best_index is None:
        raise ValueError("oracle found no feasible point")
    assignment = plan.reconstruct(best_index)
    obj, feasible, violated = model.evaluate(assignment)
    if not feasible or obj != best_obj:
        raise AssertionError("oracle reconstruction mismatch")
    return best_obj, assignment


class _OraclePlan:
    """Symbolic preprocessing shared by all chunks of the enumeration."""

    def __init__(self, model: ModelIR, enumerable_vars: Sequence[VarId], cap: int):
        self.model = model
        variables = model.variables
        constraints = model.constraints

        self.const: dict[VarId, int] = {
            v.id: v.lower for v in variables if v.lower == v.upper
        }
        enum_ids = [
            vid for vid in dict.fromkeys(int(v) for v in enumerable_vars)
            if vid not in self.const
        ]
        known: set[VarId] = set(self.const) | set(enum_ids)
        consumed = [False] * len(constraints)

        # chains of single-unknown equalities: (var, coef, rhs, known terms)
        self.determined: list[tuple[VarId, int, int, list[tuple[VarId, int]]]] = []
        changed = True
        while changed:
            changed = False
            for idx, con in enumerate(constraints):
                if consumed[idx] or con.sense != EQ:
                    continue
                unknown = [
                    (vid, coef)
                    for vid, coef in con.expr.terms.items()
                    if vid not in known
                ]
                if len(unknown) != 1:
                    continue
                vid, coef = unknown[0]
                rest = [
                    (v, c) for v, c in con.expr.terms.items() if v != vid
                ]
                self.determined.append((vid, coef, con.rhs, rest))
                known.add(vid)
                consumed[idx] = True
                changed = True

        # optimal-slack pairs among the leftover unknowns
        leftover = [v.id for v in variables if v.id not in known]
        rows_by_var: dict[VarId, list[int]] = {vid: [] for vid in leftover}
        for idx, con in enumerate(constraints):
            if consumed[idx]:
                continue
            for vid in con.expr.terms:
                if vid in rows_by_var:
                    rows_by_var[vid].append(idx)
        obj_terms = model.objective.terms
        self.pairs: list[tuple[VarId, VarId, int, int, list[tuple[int, list]]]] = []
        paired: set[VarId] = set()
        for vid in leftover:
            if vid in paired:
                continue
            rows = rows_by_var[vid]
            if not rows:
                continue
            partner: VarId | None = None
            ok = True
            for ridx in rows:
                con = constraints[ridx]
                if con.sense == EQ:
                    ok = False
                    break
                sign = 1 if con.sense == LE else -1
                unknown = [
                    (v, sign * c)
                    for v, c in con.expr.terms.items()
                    if v not in known and v != vid
                ]
                if len(unknown) != 1:
                    ok = False
                    break
                other, other_coef = unknown[0]
                if partner is None:
                    partner = other
                elif partner != other:
                    ok = False
                    break
                self_coef = sign * con.expr.terms[vid]
                if {self_coef, other_coef} != {1, -1}:
                    ok = False
                    break
            if not ok or partner is None:
                raise ValueError(
                    f"oracle cannot determine variable {variables[vid].name!r}"
                )
            # orient the pair: p has normalized coefficient +1 in every row
            sample = constraints[rows[0]]
            sample_sign = 1 if sample.sense == LE else -1
            p, m = (
                (vid, partner)
                if sample_sign * sample.expr.terms[vid] == 1
                else (partner, vid)
            )
            if rows_by_var.get(partner, []) != rows:
                raise ValueError(
                    f"oracle: slack pair rows mismatch for {variables[vid].name!r}"
                )
            for ridx in rows:
                con = constraints[ridx]
                sign = 1 if con.sense == LE else -1
                if sign * con.expr.terms[p] != 1 or sign * con.expr.terms[m] != -1:
                    raise ValueError("oracle: inconsistent slack pair pattern")
                consumed[ridx] = True
            a = -obj_terms.get(p, 0)
            b = obj_terms.get(m, 0)
            if a <= 0 or b < a:
                raise ValueError(
                    "oracle: slack pair objective pattern requires beta >= alpha > 0"
                )
            if variables[p].lower != 0 or variables[m].lower != 0:
                raise ValueError("oracle: slack variables must have lower bound 0")
            self.pairs.append(
                (
                    p,
                    m,
                    variables[p].upper,
                    variables[m].upper,
                    [
                        (
                            (1 if constraints[r].sense == LE else -1) * constraints[r].rhs,
                            [
                                (v, (1 if constraints[r].sense == LE else -1) * c)
                                for v, c in constraints[r].expr.terms.items()
                                if v not in (p, m)
                            ],
                        )
                        for r in rows
                    ],
                )
            )
            paired.add(p)
            paired.add(m)
            known.add(p)
            known.add(m)

        # unconstrained leftovers sit at whichever bound the objective prefers
        self.free: dict[VarId, int] = {}
        for vid in leftover:
            if vid in known:
                continue
            coef = obj_terms.get(vid, 0)
            var = variables[vid]
            self.free[vid] = var.upper if coef < 0 else var.lower
            known.add(vid)

        # compress mutually exclusive binary pairs among enumerated variables
        enum_set = set(enum_ids)
        self.excl_pairs: list[tuple[VarId, VarId]] = []
        in_excl: set[VarId] = set()
        for idx, con in enumerate(constraints):
            if consumed[idx] or con.sense != LE or con.rhs != 1:
                continue
            terms = list(con.expr.terms.items())
            if len(terms) != 2:
                continue
            (va, ca), (vb, cb) = terms
            if ca != 1 or cb != 1:
                continue
            if va not in enum_set or vb not in enum_set:
                continue
            if va in in_excl or vb in in_excl:
                continue
            v0, v1 = variables[va], variables[vb]
            if (v0.lower, v0.upper) != (0, 1) or (v1.lower, v1.upper) != (0, 1):
                continue
            self.excl_pairs.append((va, vb))
            in_excl.update((va, vb))
            consumed[idx] = True

        self.singles: list[tuple[VarId, int, int]] = [
            (vid, variables[vid].lower, variables[vid].upper)
            for vid in enum_ids
            if vid not in in_excl
        ]

        self.check_rows = [
            constraints[idx] for idx, used in enumerate(consumed) if not used
        ]

        self.combo_count = 1
        self.radices: list[int] = []
        for _ in self.excl_pairs:
            self.radices.append(3)
        for _, lo, up in self.singles:
            self.radices.append(up - lo + 1)
        for r in self.radices:
            self.combo_count *= r
            if self.combo_count > cap:
                raise ValueError(
                    f"oracle cap exceeded: {self.combo_count} > {cap} combinations"
                )
        self.combo_count = max(self.combo_count, 1)

    # -- numeric evaluation ---------------------------------------------------

    def _decode(self, idx: np.ndarray) -> dict[VarId, np.ndarray]:
        vals: dict[VarId, np.ndarray] = {}
        stride = 1
        slot = 0
        for va, vb in self.excl_pairs:
            digit = (idx // stride) % 3
            vals[va] = (digit == 1).astype(np.int64)
            vals[vb] = (digit == 2).astype(np.int64)
            stride *= 3
            slot += 1
        for vid, lo, up in self.singles:
            radix = up - lo + 1
            vals[vid] = lo + (idx // stride) % radix
            stride *= radix
        return vals

    def _lookup(self, vals: dict[VarId, np.ndarray], vid: VarId):
        if vid in vals:
            return vals[vid]
        if vid in self.const:
            return self.const[vid]
        return self.free[vid]

    def evaluate_chunk(self, idx: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        vals = self._decode(idx)
        feasible = np.ones(len(idx), dtype=bool)
        for vid, coef, rhs, rest in self.determined:
            num = np.full(len(idx), rhs, dtype=np.int64)
            for v, c in rest:
                num -= c * self._lookup(vals, v)
            q, r = np.divmod(num, coef)
            feasible &= r == 0
            var = self.model.variables[vid]
            feasible &= (q >= var.lower) & (q <= var.upper)
            vals[vid] = q
        for p, m, p_up, m_up, rows in self.pairs:
            t = None
            for rhs, knowns in rows:
                row_t = np.full(len(idx), rhs, dtype=np.int64)
                for v, c in knowns:
                    row_t -= c * self._lookup(vals, v)
                t = row_t if t is None else np.minimum(t, row_t)
            pv = np.minimum(np.maximum(t, 0), p_up)
            mv = np.where(t < 0, -t, 0)
            feasible &= mv <= m_up
            vals[p] = pv
            vals[m] = mv
        for con in self.check_rows:
            lhs = np.zeros(len(idx), dtype=np.int64)
            for v, c in con.expr.terms.items():
                lhs = lhs + c * self._lookup(vals, v)
            if con.sense == LE:
                feasible &= lhs <= con.rhs
            elif con.sense == GE:
                feasible &= lhs >= con.rhs
            else:
                feasible &= lhs == con.rhs
        obj = np.full(len(idx), self.model.objective.constant, dtype=np.int64)
        for v, c in self.model.objective.terms.items():
            obj = obj + c * self._lookup(vals, v)
        return obj, feasible

    def reconstruct(self, index: int) -> dict[VarId, int]:
        idx = np.array([index], dtype=np.int64)
        vals = self._decode(idx)
        assignment: dict[VarId, int] = {v: int(arr[0]) for v, arr in vals.items()}
        assignment.update(self.const)
        assignment.update(self.free)
        for vid, coef, rhs, rest in self.determined:
            num = rhs - sum(c * assignment[v] for v, c in rest)
            assignment[vid] = num // coef
        for p, m, p_up, m_up, rows in self.pairs:
            t = min(
                rhs - sum(c * assignment[v] for v, c in knowns)
                for rhs, knowns in rows
            )
            assignment[p] = min(max(t, 0), p_up)
            assignment[m] = -t if t < 0 else 0
        return assignment
