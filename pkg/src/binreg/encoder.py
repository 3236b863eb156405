"""MIP and pseudo-Boolean encodings of binarized-regression training.

The MIP uses weight indicator pairs (w+, w-), integer biases b, per-instance
per-class scores y and margin slacks e+/e-.  The PBO variant replaces every
bounded integer variable x by ``x_LB + sum_q 2^(q-1) x_q`` over fresh binary
bits, so the resulting model is all-binary.

All objective coefficients are integers: alpha and beta are rationals scaled
by their least common denominator, so solver objective values are exact
integers (``scale`` times the nominal objective).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .dataset import BinaryDataset
from .model_ir import EQ, GE, LE, Domain, LinearExpr, ModelIR, VarId

__all__ = [
    "Hyperparams",
    "QuantizationScheme",
    "IntSlot",
    "EncodingLayout",
    "TrainedModel",
    "q_bits",
    "default_bounds",
    "build_mip",
    "build_pbo",
    "quantize_model",
    "decode_solution",
    "complete_assignment",
    "make_rounding_heuristic",
    "objective_value",
]


def _to_fraction(value) -> Fraction:
    # floats go through their decimal repr so 0.1 means exactly 1/10
    return Fraction(str(value)) if isinstance(value, float) else Fraction(value)


@dataclass(frozen=True)
class Hyperparams:
    """Margin reward alpha and margin penalty beta (both positive rationals).

    beta defaults to 2*alpha when omitted.
    """

    alpha: Fraction
    beta: Fraction | None = None

    def __post_init__(self):
        alpha = _to_fraction(self.alpha)
        beta = 2 * alpha if self.beta is None else _to_fraction(self.beta)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "beta", beta)
        if alpha <= 0 or beta <= 0:
            raise ValueError("alpha and beta must be positive")

    def scaled(self) -> tuple[int, int, int]:
        """Return integers (A, B, scale) with alpha = A/scale, beta = B/scale."""
        scale = math.lcm(self.alpha.denominator, self.beta.denominator)
        a = self.alpha.numerator * (scale // self.alpha.denominator)
        b = self.beta.numerator * (scale // self.beta.denominator)
        return a, b, scale


def q_bits(lower: int, upper: int) -> int:
    """Number of quantization bits: ceil(log2(upper - lower + 1))."""
    if lower > upper:
        raise ValueError("lower bound above upper bound")
    return (upper - lower).bit_length()


@dataclass(frozen=True)
class QuantizationScheme:
    """Finite integer bounds for the bias, score and slack variables.

    The per-variable bit count Q follows from each range via :func:`q_bits`.
    """

    bias_lower: int
    bias_upper: int
    score_lower: int
    score_upper: int
    slack_lower: int
    slack_upper: int

    def __post_init__(self):
        for lo, up in (
            (self.bias_lower, self.bias_upper),
            (self.score_lower, self.score_upper),
            (self.slack_lower, self.slack_upper),
        ):
            if lo > up:
                raise ValueError("lower bound above upper bound")
        if self.slack_lower < 0:
            raise ValueError("slack variables are non-negative")


def default_bounds(train: BinaryDataset) -> QuantizationScheme:
    """Default bounds: b in [-F, F], y in [-2F, 2F], e in [0, 4F].

    Any weighted sum of F bits lies in [-F, F], so wider biases are dominated;
    scores add bias and weighted sum; slacks cover the largest score spread.
    """
    F = train.F_size
    return QuantizationScheme(-F, F, -2 * F, 2 * F, 0, 4 * F)


@dataclass(frozen=True)
class IntSlot:
    """Handle to one encoded integer: a direct variable or quantization bits.

    Direct mode stores the variable id in ``var``; quantized mode stores the
    LSB-first bit variable ids in ``bits`` and represents
    ``lower + sum_q 2^(q-1) bits[q-1]``.
    """

    lower: int
    upper: int
    var: VarId | None = None
    bits: tuple[VarId, ...] = ()

    def value(self, assignment) -> int:
        if self.var is not None:
            return assignment[self.var]
        total = self.lower
        for q, vid in enumerate(self.bits):
            total += (1 << q) * assignment[vid]
        return total

    def relaxed_value(self, values: np.ndarray) -> float:
        if self.var is not None:
            return float(values[self.var])
        total = float(self.lower)
        for q, vid in enumerate(self.bits):
            total += (1 << q) * float(values[vid])
        return total

    def encode(self, value: int, out: dict[VarId, int]) -> None:
        """Write an in-range integer into the assignment dict."""
        if not (self.lower <= value <= self.upper):
            raise ValueError(f"value {value} outside [{self.lower}, {self.upper}]")
        if self.var is not None:
            out[self.var] = int(value)
            return
        offset = int(value) - self.lower
        for q, vid in enumerate(self.bits):
            out[vid] = (offset >> q) & 1


@dataclass
class EncodingLayout:
    """Variable ids of the encoding, indexed by their roles."""

    F_size: int
    C_size: int
    n_instances: int
    mode: str  # "mip" or "pbo"
    w_plus: np.ndarray  # (F, C) variable ids
    w_minus: np.ndarray  # (F, C) variable ids
    bias: list[IntSlot]  # per class c
    score: list[list[IntSlot]]  # [c][i]
    slack_pos: list[IntSlot]  # e+ per instance i
    slack_neg: list[IntSlot]  # e- per instance i


@dataclass(frozen=True, eq=False)
class TrainedModel:
    """Learned weights W in {-1,0,1}^(F x C) and integer biases b."""

    W: np.ndarray  # (F, C) int8
    b: np.ndarray  # (C,) int64
    F_size: int
    C_size: int

    def __post_init__(self):
        if self.W.shape != (self.F_size, self.C_size):
            raise ValueError("weight matrix shape mismatch")
        if self.b.shape != (self.C_size,):
            raise ValueError("bias vector shape mismatch")
        if len(self.W) and not np.isin(self.W, (-1, 0, 1)).all():
            raise ValueError("weight outside {-1, 0, 1}")


# -- MIP construction --------------------------------------------------------


def build_mip(
    train: BinaryDataset,
    hp: Hyperparams,
    qs: QuantizationScheme | None = None,
) -> tuple[ModelIR, EncodingLayout]:
    """Build the exact training MIP.

    Variables: per (f, c) the indicator pair w+/w-; per class the bias b_c;
    per (c, i) the score y_{c,i}; per instance the slack pair e+_i/e-_i.
    Constraints: w+ + w- <= 1; score equalities sum_f (w+ - w-) x + b = y;
    margin rows y_label >= y_c + e+ - e- for every wrong class.
    Objective: minimize -alpha*sum e+ + beta*sum e- + sum (w+ + w-), scaled
    to integers.
    """
    k = len(train)
    if k == 0:
        raise ValueError("training set is empty")
    if train.C_size < 2:
        raise ValueError("training requires at least two classes")
    F, C = train.F_size, train.C_size
    if qs is None:
        qs = default_bounds(train)
    A, B, scale = hp.scaled()

    model = ModelIR("binreg_mip")
    w_plus = np.empty((F, C), dtype=np.int64)
    w_minus = np.empty((F, C), dtype=np.int64)
    for f in range(F):
        for c in range(C):
            w_plus[f, c] = model.add_variable(f"w+_{f}_{c}", Domain.BINARY)
            w_minus[f, c] = model.add_variable(f"w-_{f}_{c}", Domain.BINARY)
    bias = [
        IntSlot(
            qs.bias_lower,
            qs.bias_upper,
            var=model.add_variable(f"b_{c}", Domain.INTEGER, qs.bias_lower, qs.bias_upper),
        )
        for c in range(C)
    ]
    score = [
        [
            IntSlot(
                qs.score_lower,
                qs.score_upper,
                var=model.add_variable(
                    f"y_{c}_{i}", Domain.INTEGER, qs.score_lower, qs.score_upper
                ),
            )
            for i in range(k)
        ]
        for c in range(C)
    ]
    slack_pos = [
        IntSlot(
            qs.slack_lower,
            qs.slack_upper,
            var=model.add_variable(f"ep_{i}", Domain.INTEGER, qs.slack_lower, qs.slack_upper),
        )
        for i in range(k)
    ]
    slack_neg = [
        IntSlot(
            qs.slack_lower,
            qs.slack_upper,
            var=model.add_variable(f"em_{i}", Domain.INTEGER, qs.slack_lower, qs.slack_upper),
        )
        for i in range(k)
    ]

    for f in range(F):
        for c in range(C):
            model.add_constraint(
                LinearExpr({int(w_plus[f, c]): 1, int(w_minus[f, c]): 1}),
                LE,
                1,
                name=f"pair_{f}_{c}",
            )
    X = train.X
    for c in range(C):
        for i in range(k):
            terms: dict[VarId, int] = {}
            for f in np.flatnonzero(X[i]):
                terms[int(w_plus[f, c])] = 1
                terms[int(w_minus[f, c])] = -1
            terms[bias[c].var] = 1
            terms[score[c][i].var] = -1
            model.add_constraint(LinearExpr(terms), EQ, 0, name=f"score_{c}_{i}")
    labels = train.labels
    for i in range(k):
        label = int(labels[i])
        for c in range(C):
            if c == label:
                continue
            expr = LinearExpr(
                {
                    score[label][i].var: 1,
                    score[c][i].var: -1,
                    slack_pos[i].var: -1,
                    slack_neg[i].var: 1,
                }
            )
            model.add_constraint(expr, GE, 0, name=f"margin_{i}_{c}")

    objective: dict[VarId, int] = {}
    for f in range(F):
        for c in range(C):
            objective[int(w_plus[f, c])] = scale
            objective[int(w_minus[f, c])] = scale
    for i in range(k):
        objective[slack_pos[i].var] = -A
        objective[slack_neg[i].var] = B
    model.set_objective(LinearExpr(objective))

    layout = EncodingLayout(
        F, C, k, "mip", w_plus, w_minus, bias, score, slack_pos, slack_neg
    )
    return model, layout


# -- quantization ------------------------------------------------------------


def quantize_model(model: ModelIR) -> tuple[ModelIR, dict[VarId, IntSlot]]:
    """Replace every integer variable by its binary quantization.

    Returns the all-binary model and a map from old variable id to its new
    IntSlot (binary variables map to a direct slot on their new id).  Each
    quantized variable with at least one bit gets a cap constraint
    ``sum_q 2^(q-1) x_q <= upper - lower``.
    """
    out = ModelIR(model.name + "_pbo")
    slots: dict[VarId, IntSlot] = {}
    for var in model.variables:
        if var.domain is Domain.BINARY:
            new_id = out.add_variable(var.name, Domain.BINARY)
            slots[var.id] = IntSlot(0, 1, var=new_id)
        else:
            nbits = q_bits(var.lower, var.upper)
            bits = tuple(
                out.add_variable(f"{var.name}_q{q}", Domain.BINARY)
                for q in range(1, nbits + 1)
            )
            slots[var.id] = IntSlot(var.lower, var.upper, bits=bits)

    def rewrite(expr: LinearExpr) -> LinearExpr:
        terms: list[tuple[VarId, int]] = []
        constant = expr.constant
        for vid, coef in expr.terms.items():
            slot = slots[vid]
            if slot.var is not None:
                terms.append((slot.var, coef))
            else:
                constant += coef * slot.lower
                for q, bit in enumerate(slot.bits):
                    terms.append((bit, coef * (1 << q)))
        return LinearExpr.from_terms(terms, constant)

    for con in model.constraints:
        out.add_constraint(rewrite(con.expr), con.sense, con.rhs, name=con.name)
    for var in model.variables:
        slot = slots[var.id]
        if slot.var is None and slot.bits:
            expr = LinearExpr.from_terms(
                (bit, 1 << q) for q, bit in enumerate(slot.bits)
            )
            out.add_constraint(expr, LE, var.upper - var.lower, name=f"cap_{var.name}")
    out.set_objective(rewrite(model.objective))
    return out, slots


def _requantize(slot: IntSlot, slots: dict[VarId, IntSlot]) -> IntSlot:
    assert slot.var is not None
    return slots[slot.var]


def build_pbo(
    train: BinaryDataset,
    hp: Hyperparams,
    qs: QuantizationScheme | None = None,
) -> tuple[ModelIR, EncodingLayout]:
    """Build the all-binary quantization of the training MIP."""
    if qs is None:
        qs = default_bounds(train)
    mip, layout = build_mip(train, hp, qs)
    pbo, slots = quantize_model(mip)
    remap = np.empty(mip.num_vars, dtype=np.int64)
    remap.fill(-1)
    for old_id, slot in slots.items():
        if slot.var is not None:
            remap[old_id] = slot.var
    new_layout = EncodingLayout(
        layout.F_size,
        layout.C_size,
        layout.n_instances,
        "pbo",
        remap[layout.w_plus],
        remap[layout.w_minus],
        [_requantize(s, slots) for s in layout.bias],
        [[_requantize(s, slots) for s in row] for row in layout.score],
        [_requantize(s, slots) for s in layout.slack_pos],
        [_requantize(s, slots) for s in layout.slack_neg],
    )
    return pbo, new_layout


# -- decoding and completion --------------------------------------------------


def decode_solution(layout: EncodingLayout, assignment) -> TrainedModel:
    """Read W and b out of a feasible assignment."""
    F, C = layout.F_size, layout.C_size
    W = np.zeros((F, C), dtype=np.int8)
    for f in range(F):
        for c in range(C):
            try:
                wp = assignment[int(layout.w_plus[f, c])]
                wm = assignment[int(layout.w_minus[f, c])]
            except KeyError as exc:
                raise ValueError("partial assignment") from exc
            if wp not in (0, 1) or wm not in (0, 1) or wp + wm > 1:
                raise ValueError(f"infeasible weight pair at feature {f}, class {c}")
            W[f, c] = wp - wm
    try:
        b = np.array([slot.value(assignment) for slot in layout.bias], dtype=np.int64)
    except KeyError as exc:
        raise ValueError("partial assignment") from exc
    return TrainedModel(W, b, F, C)


def _scores(train: BinaryDataset, W: np.ndarray, b: np.ndarray) -> np.ndarray:
    return train.X.astype(np.int64) @ W.astype(np.int64) + b.astype(np.int64)


def _margins(scores: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Per instance: true-class score minus best wrong-class score."""
    n = len(labels)
    own = scores[np.arange(n), labels]
    masked = scores.copy()
    masked[np.arange(n), labels] = np.iinfo(np.int64).min
    return own - masked.max(axis=1)


def complete_assignment(
    layout: EncodingLayout,
    train: BinaryDataset,
    W: np.ndarray,
    b: np.ndarray,
) -> dict[VarId, int]:
    """Extend integer weights and biases to a full assignment.

    Scores follow from the score equalities; slacks from the optimal-slack
    rule e+ = max(0, m), e- = max(0, -m) with m the instance margin.  Raises
    ValueError when a derived value falls outside its slot bounds (possible
    only under non-default bounds).
    """
    out: dict[VarId, int] = {}
    F, C = layout.F_size, layout.C_size
    for f in range(F):
        for c in range(C):
            w = int(W[f, c])
            out[int(layout.w_plus[f, c])] = 1 if w > 0 else 0
            out[int(layout.w_minus[f, c])] = 1 if w < 0 else 0
    for c in range(C):
        layout.bias[c].encode(int(b[c]), out)
    scores = _scores(train, W, b)
    for c in range(C):
        for i in range(layout.n_instances):
            layout.score[c][i].encode(int(scores[i, c]), out)
    margins = _margins(scores, train.labels)
    for i in range(layout.n_instances):
        m = int(margins[i])
        layout.slack_pos[i].encode(max(0, m), out)
        layout.slack_neg[i].encode(max(0, -m), out)
    return out


def make_rounding_heuristic(layout: EncodingLayout, train: BinaryDataset):
    """Primal heuristic: round relaxed weights, clamp biases, complete exactly.

    Returns a callable mapping a dense LP value array to a full integer
    assignment, or None when completion is impossible under the layout
    bounds.  Rounding w at the 0.5 threshold respects w+ + w- <= 1 because
    a relaxation-feasible pair cannot have both halves above 0.5.
    """
    wp_ids = layout.w_plus
    wm_ids = layout.w_minus

    def heuristic(values: np.ndarray):
        wp = values[wp_ids] > 0.5
        wm = values[wm_ids] > 0.5
        W = wp.astype(np.int8) - wm.astype(np.int8)
        b = np.empty(layout.C_size, dtype=np.int64)
        for c, slot in enumerate(layout.bias):
            rounded = math.floor(slot.relaxed_value(values) + 0.5)
            b[c] = min(max(rounded, slot.lower), slot.upper)
        try:
            return complete_assignment(layout, train, W, b)
        except ValueError:
            return None

    return heuristic


def objective_value(train: BinaryDataset, hp: Hyperparams, W: np.ndarray, b: np.ndarray) -> int:
    """Scaled objective recomputed from first principles (margins + size).

    Equals the IR objective of the completed assignment: slacks take their
    optimal values for the given weights.
    """
    A, B, scale = hp.scaled()
    margins = _margins(_scores(train, W, b), train.labels)
    pos = int(np.maximum(margins, 0).sum())
    neg = int(np.maximum(-margins, 0).sum())
    nonzero = int(np.count_nonzero(W))
    return -A * pos + B * neg + scale * nonzero
