"""Inference with trained models and the reported metrics.

Scores are exact integer arithmetic; accuracy, mean margin and model-size
reduction are exact rationals (serialized as floats in reports).
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .dataset import BinaryDataset
from .encoder import TrainedModel

__all__ = [
    "EvalReport",
    "predict_scores",
    "predict_label",
    "margin",
    "accuracy",
    "model_size_reduction",
]


@dataclass(frozen=True)
class EvalReport:
    accuracy: Fraction
    correct_count: int
    total: int
    mean_margin: Fraction
    reduction_pct: Fraction

    def to_json_dict(self) -> dict:
        return {
            "accuracy": float(self.accuracy),
            "correct": self.correct_count,
            "total": self.total,
            "mean_margin": float(self.mean_margin),
            "reduction_pct": float(self.reduction_pct),
        }


def predict_scores(model: TrainedModel, x) -> np.ndarray:
    """Per-class scores sum_f W[f][c]*x[f] + b[c] for one instance."""
    x = np.asarray(x, dtype=np.int64)
    if x.shape != (model.F_size,):
        raise ValueError(f"expected {model.F_size} features, got {x.shape}")
    return x @ model.W.astype(np.int64) + model.b


def predict_label(model: TrainedModel, x) -> int:
    """Argmax class; ties break to the lowest class index."""
    return int(predict_scores(model, x).argmax())


def margin(model: TrainedModel, x, label: int) -> int:
    """True-class score minus the best wrong-class score (positive iff
    strictly correctly classified)."""
    if model.C_size < 2:
        raise ValueError("margin requires at least two classes")
    if not (0 <= label < model.C_size):
        raise ValueError(f"label {label} outside [0, {model.C_size})")
    scores = predict_scores(model, x)
    own = int(scores[label])
    rest = np.delete(scores, label)
    return own - int(rest.max())


def model_size_reduction(model: TrainedModel) -> Fraction:
    """Percentage of weight entries that are exactly zero."""
    zeros = int((model.W == 0).sum())
    return Fraction(100 * zeros, model.F_size * model.C_size)


def accuracy(model: TrainedModel, ds: BinaryDataset) -> EvalReport:
    """Dataset-level report: accuracy, mean true-label margin, reduction."""
    if len(ds) == 0:
        raise ValueError("empty dataset")
    if ds.F_size != model.F_size:
        raise ValueError("feature count mismatch between model and dataset")
    X = ds.X.astype(np.int64)
    scores = X @ model.W.astype(np.int64) + model.b
    preds = scores.argmax(axis=1)
    correct = int((preds == ds.labels).sum())
    n = len(ds)
    own = scores[np.arange(n), ds.labels]
    masked = scores.copy()
    masked[np.arange(n), ds.labels] = np.iinfo(np.int64).min
    margins = own - masked.max(axis=1)
    return EvalReport(
        accuracy=Fraction(correct, n),
        correct_count=correct,
        total=n,
        mean_margin=Fraction(int(margins.sum()), n),
        reduction_pct=model_size_reduction(model),
    )
