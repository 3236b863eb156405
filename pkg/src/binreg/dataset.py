"""Dataset ingestion, binarization, splitting and label corruption.

Feature matrices are numpy uint8 arrays (one row per instance); labels are
int64.  All randomized operations use a named PRNG (PCG64) seeded explicitly,
so results are reproducible across platforms.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

__all__ = [
    "RawDataset",
    "BinaryDataset",
    "SplitSpec",
    "CorruptionSpec",
    "DEFAULT_THRESHOLD",
    "load_idx",
    "load_csv",
    "write_csv",
    "binarize",
    "split",
    "corrupt_labels",
]

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801

DEFAULT_THRESHOLD = Fraction(255, 2)


@dataclass(frozen=True, eq=False)
class RawDataset:
    """Instances with grayscale feature values in [0, 255]."""

    X: np.ndarray  # shape (n, feature_count), dtype uint8
    labels: np.ndarray  # shape (n,), dtype int64
    feature_count: int
    class_count: int

    def __post_init__(self):
        if self.X.ndim != 2 or self.X.shape[1] != self.feature_count:
            raise ValueError("feature matrix shape does not match feature_count")
        if self.labels.ndim != 1 or len(self.labels) != len(self.X):
            raise ValueError("image/label count mismatch")
        if len(self.labels) and (
            self.labels.min() < 0 or self.labels.max() >= self.class_count
        ):
            raise ValueError("label outside [0, class_count)")

    def __len__(self) -> int:
        return len(self.labels)


@dataclass(frozen=True, eq=False)
class BinaryDataset:
    """Instances with bit-vector features and integer class labels."""

    X: np.ndarray  # shape (n, F_size), dtype uint8, values in {0, 1}
    labels: np.ndarray  # shape (n,), dtype int64
    F_size: int
    C_size: int

    def __post_init__(self):
        if self.X.ndim != 2 or self.X.shape[1] != self.F_size:
            raise ValueError("feature matrix shape does not match F_size")
        if self.labels.ndim != 1 or len(self.labels) != len(self.X):
            raise ValueError("feature/label count mismatch")
        if self.C_size < 2:
            raise ValueError("C_size must be at least 2")
        if len(self.X) and not np.isin(self.X, (0, 1)).all():
            raise ValueError("non-binary feature value")
        if len(self.labels) and (
            self.labels.min() < 0 or self.labels.max() >= self.C_size
        ):
            raise ValueError("label outside [0, C_size)")

    def __len__(self) -> int:
        return len(self.labels)

    def subset(self, indices: np.ndarray) -> "BinaryDataset":
        return BinaryDataset(
            self.X[indices].copy(), self.labels[indices].copy(), self.F_size, self.C_size
        )


@dataclass(frozen=True)
class SplitSpec:
    train_count: int
    seed: int

    def __post_init__(self):
        if self.train_count <= 0:
            raise ValueError("train_count must be positive")


@dataclass(frozen=True)
class CorruptionSpec:
    fraction: Fraction
    seed: int

    def __post_init__(self):
        # Floats go through their decimal repr so 0.1 means exactly 1/10.
        raw = self.fraction
        frac = Fraction(str(raw)) if isinstance(raw, float) else Fraction(raw)
        object.__setattr__(self, "fraction", frac)
        if not (0 <= self.fraction <= 1):
            raise ValueError("corruption fraction must lie in [0, 1]")


# -- IDX ingestion ----------------------------------------------------------


def _read_idx(path: str | os.PathLike, expected_magic: int) -> tuple[list[int], np.ndarray]:
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 4:
        raise ValueError(f"{path}: truncated IDX header")
    magic = int.from_bytes(data[0:4], "big")
    if magic != expected_magic:
        raise ValueError(
            f"{path}: bad IDX magic 0x{magic:08x}, expected 0x{expected_magic:08x}"
        )
    ndims = magic & 0xFF
    header = 4 + 4 * ndims
    if len(data) < header:
        raise ValueError(f"{path}: truncated IDX dimension header")
    dims = [
        int.from_bytes(data[4 + 4 * i : 8 + 4 * i], "big") for i in range(ndims)
    ]
    count = 1
    for d in dims:
        count *= d
    if len(data) - header < count:
        raise ValueError(f"{path}: truncated IDX payload")
    if len(data) - header > count:
        raise ValueError(f"{path}: trailing bytes after IDX payload")
    return dims, np.frombuffer(data, dtype=np.uint8, offset=header)


def load_idx(
    images_path: str | os.PathLike,
    labels_path: str | os.PathLike,
    class_count: int | None = None,
) -> RawDataset:
    """Read an IDX image/label file pair (the MNIST distribution format).

    ``class_count`` defaults to max(label)+1; when given, any label at or
    above it is rejected.
    """
    image_dims, image_bytes = _read_idx(images_path, IDX_IMAGES_MAGIC)
    label_dims, label_bytes = _read_idx(labels_path, IDX_LABELS_MAGIC)
    n = image_dims[0]
    if label_dims[0] != n:
        raise ValueError(
            f"image/label count mismatch: {n} images, {label_dims[0]} labels"
        )
    feature_count = 1
    for d in image_dims[1:]:
        feature_count *= d
    X = image_bytes.reshape(n, feature_count)
    labels = label_bytes.astype(np.int64)
    if class_count is None:
        class_count = int(labels.max()) + 1 if n else 1
    return RawDataset(X, labels, feature_count, class_count)


# -- CSV ingestion ----------------------------------------------------------


def load_csv(path: str | os.PathLike, class_count: int | None = None) -> BinaryDataset:
    """Read rows of ``|F|`` comma-separated bits followed by an integer label."""
    rows: list[list[int]] = []
    labels: list[int] = []
    width = None
    with open(path, "r", encoding="ascii") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            fields = line.split(",")
            if width is None:
                width = len(fields) - 1
                if width < 1:
                    raise ValueError(f"{path}:{lineno}: row has no features")
            elif len(fields) - 1 != width:
                raise ValueError(f"{path}:{lineno}: ragged row")
            try:
                values = [int(v) for v in fields]
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: non-integer field") from exc
            *features, label = values
            if any(v not in (0, 1) for v in features):
                raise ValueError(f"{path}:{lineno}: non-binary feature value")
            if label < 0:
                raise ValueError(f"{path}:{lineno}: negative label")
            rows.append(features)
            labels.append(label)
    if width is None:
        raise ValueError(f"{path}: empty CSV")
    X = np.asarray(rows, dtype=np.uint8)
    y = np.asarray(labels, dtype=np.int64)
    if class_count is None:
        # a dataset must expose at least two classes for training to be posed
        class_count = max(2, int(y.max()) + 1)
    return BinaryDataset(X, y, width, class_count)


def write_csv(ds: BinaryDataset, path: str | os.PathLike) -> None:
    """Write a BinaryDataset in the load_csv row format, one instance per line."""
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        for x, label in zip(ds.X, ds.labels):
            fh.write(",".join(str(int(v)) for v in x))
            fh.write(f",{int(label)}\n")


# -- transforms -------------------------------------------------------------


def binarize(raw: RawDataset, threshold: Fraction | float | int = DEFAULT_THRESHOLD) -> BinaryDataset:
    """Threshold grayscale values: output bit is 1 iff value > threshold.

    The comparison is exact rational arithmetic, so 128 > 255/2 > 127 holds
    with no floating-point rounding.
    """
    t = Fraction(str(threshold)) if isinstance(threshold, float) else Fraction(threshold)
    if not (0 <= t <= 255):
        raise ValueError("threshold must lie in [0, 255]")
    # value > num/den  <=>  value*den > num  (den > 0, all integers)
    bits = (raw.X.astype(np.int64) * t.denominator > t.numerator).astype(np.uint8)
    return BinaryDataset(
        bits, raw.labels.copy(), raw.feature_count, max(2, raw.class_count)
    )


def split(ds: BinaryDataset, spec: SplitSpec) -> tuple[BinaryDataset, BinaryDataset]:
    """Partition into (train, test): the first k instances of a seeded shuffle."""
    k = spec.train_count
    if k >= len(ds):
        raise ValueError(f"train_count {k} must be smaller than dataset size {len(ds)}")
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    perm = rng.permutation(len(ds))
    return ds.subset(perm[:k]), ds.subset(perm[k:])


def corruption_count(fraction: Fraction, k: int) -> int:
    """round(fraction*k) with half-up rounding, in exact rational arithmetic."""
    scaled = Fraction(fraction) * k + Fraction(1, 2)
    return scaled.numerator // scaled.denominator


def corrupt_labels(train: BinaryDataset, spec: CorruptionSpec) -> BinaryDataset:
    """Replace round(fraction*k) labels with uniform draws from the other classes.

    Selection is uniform without replacement; both the selection and the
    replacement draws are functions of the seed alone.
    """
    k = len(train)
    count = corruption_count(spec.fraction, k)
    labels = train.labels.copy()
    if count:
        if train.C_size < 2:
            raise ValueError("corruption requires at least two classes")
        rng = np.random.Generator(np.random.PCG64(spec.seed))
        chosen = rng.choice(k, size=count, replace=False)
        draws = rng.integers(0, train.C_size - 1, size=count)
        for idx, r in zip(chosen, draws):
            old = labels[idx]
            labels[idx] = r + 1 if r >= old else r
    return BinaryDataset(train.X.copy(), labels, train.F_size, train.C_size)
