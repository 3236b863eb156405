"""Tests for ingestion, binarization, splitting and corruption."""

from fractions import Fraction

import numpy as np
import pytest

from binreg.dataset import (
    BinaryDataset,
    CorruptionSpec,
    RawDataset,
    SplitSpec,
    binarize,
    corrupt_labels,
    corruption_count,
    load_csv,
    load_idx,
    split,
    write_csv,
)

from _datagen import (
    idx_images_bytes,
    idx_labels_bytes,
    random_binary_dataset,
    write_idx_pair,
)


# -- IDX --------------------------------------------------------------------


def test_load_idx_28x28_feature_count(tmp_path):
    images = np.zeros((3, 28, 28), dtype=np.uint8)
    ip, lp = write_idx_pair(tmp_path, images, [0, 1, 2])
    raw = load_idx(ip, lp)
    assert raw.feature_count == 784
    assert len(raw) == 3
    assert raw.class_count == 3


def test_load_idx_empty(tmp_path):
    images = np.zeros((0, 28, 28), dtype=np.uint8)
    ip, lp = write_idx_pair(tmp_path, images, [])
    raw = load_idx(ip, lp)
    assert len(raw) == 0
    assert raw.feature_count == 784


def test_load_idx_label_out_of_class_range(tmp_path):
    images = np.zeros((1, 2, 2), dtype=np.uint8)
    ip, lp = write_idx_pair(tmp_path, images, [10])
    with pytest.raises(ValueError):
        load_idx(ip, lp, class_count=10)


def test_load_idx_bad_magic(tmp_path):
    images = np.zeros((1, 2, 2), dtype=np.uint8)
    blob = bytearray(idx_images_bytes(images))
    blob[3] = 0x07
    path = tmp_path / "bad.idx"
    path.write_bytes(bytes(blob))
    lp = tmp_path / "labels.idx"
    lp.write_bytes(idx_labels_bytes([0]))
    with pytest.raises(ValueError, match="magic"):
        load_idx(path, lp)


def test_load_idx_count_mismatch(tmp_path):
    images = np.zeros((2, 2, 2), dtype=np.uint8)
    ip, _ = write_idx_pair(tmp_path, images, [0, 1])
    lp = tmp_path / "short_labels.idx"
    lp.write_bytes(idx_labels_bytes([0]))
    with pytest.raises(ValueError, match="mismatch"):
        load_idx(ip, lp)


def test_load_idx_truncated_payload(tmp_path):
    images = np.zeros((2, 2, 2), dtype=np.uint8)
    blob = idx_images_bytes(images)[:-3]
    ip = tmp_path / "trunc.idx"
    ip.write_bytes(blob)
    lp = tmp_path / "labels.idx"
    lp.write_bytes(idx_labels_bytes([0, 1]))
    with pytest.raises(ValueError, match="truncated"):
        load_idx(ip, lp)


# -- CSV --------------------------------------------------------------------


def test_load_csv_direct_parse(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("1,0,1,2\n0,0,0,0\n")
    ds = load_csv(p)
    assert ds.F_size == 3
    assert list(ds.X[0]) == [1, 0, 1]
    assert ds.labels[0] == 2


def test_load_csv_non_binary_feature(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("1,0,5,2\n")
    with pytest.raises(ValueError, match="non-binary"):
        load_csv(p)


def test_load_csv_flags_shape(tmp_path):
    rng = np.random.Generator(np.random.PCG64(5))
    rows = []
    for i in range(20):
        bits = rng.integers(0, 2, size=43)
        rows.append(",".join(map(str, bits)) + f",{i % 5}")
    p = tmp_path / "flags.csv"
    p.write_text("\n".join(rows) + "\n")
    ds = load_csv(p)
    assert ds.F_size == 43
    assert ds.C_size == 5


def test_load_csv_ragged_row(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("1,0,1\n1,0,1,0,1\n")
    with pytest.raises(ValueError, match="ragged"):
        load_csv(p)


def test_load_csv_negative_label(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("1,0,-1\n")
    with pytest.raises(ValueError, match="negative"):
        load_csv(p)


def test_csv_round_trip(tmp_path):
    ds = random_binary_dataset(3, 17, 6, 3)
    p = tmp_path / "rt.csv"
    write_csv(ds, p)
    back = load_csv(p, class_count=3)
    assert np.array_equal(back.X, ds.X)
    assert np.array_equal(back.labels, ds.labels)


# -- binarize ----------------------------------------------------------------


def test_binarize_threshold_boundary():
    raw = RawDataset(
        np.array([[128, 127, 0, 255]], dtype=np.uint8),
        np.array([0], dtype=np.int64),
        4,
        2,
    )
    ds = binarize(raw, Fraction(255, 2))
    assert list(ds.X[0]) == [1, 0, 0, 1]


def test_binarize_default_threshold_is_exact():
    raw = RawDataset(
        np.array([[127], [128]], dtype=np.uint8),
        np.array([0, 1], dtype=np.int64),
        1,
        2,
    )
    ds = binarize(raw)
    assert list(ds.X[:, 0]) == [0, 1]


def test_binarize_zero_stays_zero():
    raw = RawDataset(
        np.zeros((2, 3), dtype=np.uint8), np.zeros(2, dtype=np.int64), 3, 2
    )
    for t in (0, Fraction(1, 2), 100, 255):
        assert binarize(raw, t).X.sum() == 0


def test_binarize_idempotent_on_binary_data():
    bits = np.array([[0, 1], [1, 0]], dtype=np.uint8)
    raw = RawDataset(bits, np.array([0, 1], dtype=np.int64), 2, 2)
    once = binarize(raw, Fraction(1, 2))
    raw_again = RawDataset(once.X, once.labels, 2, 2)
    twice = binarize(raw_again, Fraction(1, 2))
    assert np.array_equal(once.X, twice.X)
    assert np.array_equal(once.X, bits)


def test_binarize_rejects_out_of_range_threshold():
    raw = RawDataset(
        np.zeros((1, 1), dtype=np.uint8), np.zeros(1, dtype=np.int64), 1, 2
    )
    with pytest.raises(ValueError):
        binarize(raw, 256)


# -- split -------------------------------------------------------------------


def test_split_sizes_70000():
    X = np.zeros((70000, 4), dtype=np.uint8)
    labels = np.arange(70000, dtype=np.int64) % 10
    ds = BinaryDataset(X, labels, 4, 10)
    train, test = split(ds, SplitSpec(20, seed=1))
    assert len(train) == 20
    assert len(test) == 69980


def test_split_singleton_test():
    ds = random_binary_dataset(1, 9, 3, 2)
    train, test = split(ds, SplitSpec(8, seed=0))
    assert len(test) == 1


def test_split_same_seed_identical():
    ds = random_binary_dataset(2, 30, 5, 3)
    a = split(ds, SplitSpec(10, seed=99))
    b = split(ds, SplitSpec(10, seed=99))
    for x, y in zip(a, b):
        assert np.array_equal(x.X, y.X)
        assert np.array_equal(x.labels, y.labels)


def test_split_partition_preserves_multiset():
    ds = random_binary_dataset(4, 25, 4, 3)
    for seed in (0, 7, 123):
        train, test = split(ds, SplitSpec(11, seed=seed))
        combined = np.vstack([
            np.column_stack([train.X, train.labels]),
            np.column_stack([test.X, test.labels]),
        ])
        original = np.column_stack([ds.X, ds.labels])
        key = lambda a: a[np.lexsort(a.T[::-1])]
        assert np.array_equal(key(combined), key(original))


def test_split_k_too_large():
    ds = random_binary_dataset(5, 6, 3, 2)
    with pytest.raises(ValueError):
        split(ds, SplitSpec(6, seed=0))


# -- corruption ---------------------------------------------------------------


def test_corrupt_fraction_zero_identity():
    ds = random_binary_dataset(6, 12, 4, 3)
    out = corrupt_labels(ds, CorruptionSpec(Fraction(0), seed=5))
    assert np.array_equal(out.labels, ds.labels)
    assert np.array_equal(out.X, ds.X)


def test_corrupt_fraction_one_all_differ():
    ds = random_binary_dataset(7, 15, 4, 3)
    out = corrupt_labels(ds, CorruptionSpec(Fraction(1), seed=5))
    assert (out.labels != ds.labels).all()
    assert out.labels.min() >= 0 and out.labels.max() < ds.C_size


def test_corrupt_k20_fraction_tenth_changes_two():
    ds = random_binary_dataset(8, 20, 5, 4)
    out = corrupt_labels(ds, CorruptionSpec(0.1, seed=11))
    assert int((out.labels != ds.labels).sum()) == 2


def test_corruption_count_half_up():
    assert corruption_count(Fraction(1, 10), 20) == 2
    assert corruption_count(Fraction(1, 10), 5) == 1  # 0.5 rounds up
    assert corruption_count(Fraction(1, 10), 4) == 0  # 0.4 rounds down
    assert corruption_count(Fraction(1, 4), 2) == 1
    assert corruption_count(Fraction(0), 100) == 0
    assert corruption_count(Fraction(1), 13) == 13


def test_corrupt_count_property_random():
    rng = np.random.Generator(np.random.PCG64(77))
    fractions = [Fraction(1, 10), Fraction(1, 4), Fraction(1, 3), Fraction(3, 5)]
    for trial in range(25):
        k = int(rng.integers(1, 40))
        C = int(rng.integers(2, 6))
        frac = fractions[trial % len(fractions)]
        ds = random_binary_dataset(1000 + trial, k, 3, C)
        out = corrupt_labels(ds, CorruptionSpec(frac, seed=trial))
        changed = int((out.labels != ds.labels).sum())
        assert changed == corruption_count(frac, k)
        assert out.labels.min() >= 0 and out.labels.max() < C


def test_corrupt_same_seed_identical():
    ds = random_binary_dataset(9, 30, 4, 3)
    a = corrupt_labels(ds, CorruptionSpec(0.2, seed=3))
    b = corrupt_labels(ds, CorruptionSpec(0.2, seed=3))
    assert np.array_equal(a.labels, b.labels)


def test_corruption_spec_validates_fraction():
    with pytest.raises(ValueError):
        CorruptionSpec(Fraction(3, 2), seed=0)
