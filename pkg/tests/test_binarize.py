"""Feature-to-bit mapping: hard sign, threshold fitting, transforms, round trips."""
from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rulenet import (
    BINARY,
    ENTINT,
    GREATER_THAN,
    IDENTITY,
    KINT,
    LESS_THAN,
    ONE_HOT,
    RANINT,
    BinarizeError,
    BinarizerModel,
    Dataset,
    LiteralSpec,
    Schema,
    binarizer_from_dict,
    binarizer_to_dict,
    fit,
    identity_binarizer,
    literal_description,
    load_binarizer,
    q,
    save_binarizer,
    transform,
    transform_dataset,
)


def continuous_dataset(values, labels=None, name="x") -> Dataset:
    values = np.asarray(values, dtype=np.float64)
    if labels is None:
        labels = np.zeros(len(values), dtype=np.int64)
    schema = Schema(((name, "continuous"), ("y", "label")))
    names = ("a", "b") if max(labels) else ("a",)
    return Dataset(schema, (values,), np.asarray(labels, dtype=np.int64), names)


def greater_thresholds(model: BinarizerModel, feature="x"):
    return [s.threshold for s in model.specs if s.kind == GREATER_THAN and s.feature == feature]


def lesser_thresholds(model: BinarizerModel, feature="x"):
    return [s.threshold for s in model.specs if s.kind == LESS_THAN and s.feature == feature]


# ------------------------------------------------------------------- sign ---


def test_hard_sign_maps_zero_to_negative():
    assert q(0.0) == -1.0
    assert q(1e-300) == 1.0
    assert q(-1e-300) == -1.0
    assert np.array_equal(q(np.array([-2.0, 0.0, 3.0])), [-1.0, -1.0, 1.0])


# ------------------------------------------------------------ descriptions --


def test_literal_descriptions():
    assert LiteralSpec("duration", GREATER_THAN, threshold=146.719).describe() == "duration > 146.719"
    assert LiteralSpec("duration", LESS_THAN, threshold=146.719).describe() == "duration < 146.719"
    assert LiteralSpec("duration", GREATER_THAN, threshold=0.5).describe(True) == "¬duration > 0.500"
    assert LiteralSpec("month", ONE_HOT, category="jan").describe() == "month = jan"
    assert LiteralSpec("month", ONE_HOT, category="jan").describe(True) == "¬month = jan"
    assert LiteralSpec("x_1", IDENTITY).describe() == "x_1"
    assert LiteralSpec("x_1", IDENTITY).describe(True) == "¬x_1"


def test_literal_spec_validation():
    with pytest.raises(BinarizeError, match="unknown literal kind"):
        LiteralSpec("x", "between", threshold=1.0)
    with pytest.raises(BinarizeError, match="finite threshold"):
        LiteralSpec("x", GREATER_THAN, threshold=float("nan"))
    with pytest.raises(BinarizeError, match="needs a category"):
        LiteralSpec("x", ONE_HOT)


def test_literal_description_checks_range():
    model = identity_binarizer(("x_1",))
    assert literal_description(model, 0) == "x_1"
    assert literal_description(model, 0, negated=True) == "¬x_1"
    with pytest.raises(BinarizeError, match="out of range"):
        literal_description(model, 1)


# ---------------------------------------------------------------- fitting ---


def test_one_hot_vocabulary_is_sorted():
    schema = Schema((("c", "categorical"), ("y", "label")))
    ds = Dataset(schema, (np.array(["red", "blue", "red", "green"]),),
                 np.zeros(4, dtype=np.int64), ("a",))
    model = fit(RANINT, ds, k=3, seed=0)
    assert [(s.kind, s.category) for s in model.specs] == [
        (ONE_HOT, "blue"), (ONE_HOT, "green"), (ONE_HOT, "red")]


def test_random_thresholds_are_sorted_in_range_and_seeded():
    ds = continuous_dataset(np.linspace(-3.0, 7.0, 50))
    model = fit(RANINT, ds, k=5, seed=4)
    lows, highs = greater_thresholds(model), lesser_thresholds(model)
    assert len(lows) == len(highs) == 5
    for ts in (lows, highs):
        assert ts == sorted(ts)
        assert all(-3.0 <= t <= 7.0 for t in ts)
    assert fit(RANINT, ds, k=5, seed=4) == model
    assert fit(RANINT, ds, k=5, seed=5) != model


def test_kmeans_thresholds_with_few_distinct_values():
    # distinct values <= bins: centers are the values, thresholds the midpoints,
    # then the last threshold repeats to pad out to k
    ds = continuous_dataset([0.0, 0.0, 2.0, 2.0, 10.0, 10.0])
    model = fit(KINT, ds, k=3, seed=0)
    assert greater_thresholds(model) == [1.0, 6.0, 6.0]
    assert lesser_thresholds(model) == [1.0, 6.0, 6.0]


@pytest.mark.parametrize("seed", range(5))
def test_kmeans_converges_to_cluster_midpoint(seed):
    # two tight clusters: Lloyd lands on centers 1 and 11 from any start
    ds = continuous_dataset([0.0, 1.0, 2.0, 10.0, 11.0, 12.0])
    model = fit(KINT, ds, k=2, seed=seed)
    assert greater_thresholds(model) == [6.0, 6.0]


def test_entropy_threshold_splits_between_classes():
    ds = continuous_dataset([1.0, 2.0, 9.0, 10.0], labels=[0, 0, 1, 1])
    model = fit(ENTINT, ds, k=1, seed=0)
    assert greater_thresholds(model) == [5.5]
    # second split has nothing to gain on pure segments: pad instead
    model = fit(ENTINT, ds, k=2, seed=0)
    assert greater_thresholds(model) == [5.5, 5.5]


def test_entropy_threshold_tie_takes_the_lowest():
    ds = continuous_dataset([1.0, 2.0, 3.0, 4.0], labels=[0, 1, 0, 1])
    model = fit(ENTINT, ds, k=1, seed=0)
    assert greater_thresholds(model) == [1.5]


def test_constant_feature_warns_and_degenerates():
    ds = continuous_dataset([4.0, 4.0, 4.0])
    with pytest.warns(UserWarning, match="constant"):
        model = fit(RANINT, ds, k=2, seed=0)
    assert greater_thresholds(model) == [4.0, 4.0]
    assert lesser_thresholds(model) == [4.0, 4.0]
    # every bit is then the constant "false": v > 4 and v < 4 both fail
    assert np.array_equal(transform(model, [4.0]), [-1.0, -1.0, -1.0, -1.0])


def test_fit_validation():
    ds = continuous_dataset([1.0, 2.0])
    with pytest.raises(BinarizeError, match="unknown binning method"):
        fit(BINARY, ds, k=2, seed=0)
    with pytest.raises(BinarizeError, match=">= 1"):
        fit(RANINT, ds, k=0, seed=0)
    empty = Dataset(ds.schema, (np.zeros(0),), np.zeros(0, dtype=np.int64), ("a",))
    with pytest.raises(BinarizeError, match="empty training split"):
        fit(RANINT, empty, k=2, seed=0)


# -------------------------------------------------------------- transforms --


def hand_model():
    specs = (
        LiteralSpec("v", GREATER_THAN, threshold=5.0),
        LiteralSpec("v", LESS_THAN, threshold=5.0),
        LiteralSpec("c", ONE_HOT, category="red"),
    )
    return BinarizerModel(
        method=RANINT, bins=1, seed=0,
        feature_names=("v", "c"), feature_kinds=("continuous", "categorical"), specs=specs,
    )


def test_transform_literal_semantics():
    model = hand_model()
    assert np.array_equal(transform(model, [7.0, "red"]), [1.0, -1.0, 1.0])
    assert np.array_equal(transform(model, [3.0, "blue"]), [-1.0, 1.0, -1.0])
    # a value equal to the threshold satisfies neither strict inequality
    assert np.array_equal(transform(model, [5.0, "red"]), [-1.0, -1.0, 1.0])


def test_transform_dataset_matches_per_row():
    model = hand_model()
    schema = Schema((("v", "continuous"), ("c", "categorical"), ("y", "label")))
    rng = np.random.default_rng(0)
    values = rng.uniform(0.0, 10.0, size=40)
    values[::7] = 5.0  # exercise the tie-at-threshold path
    cats = np.where(rng.random(40) < 0.5, "red", "blue")
    ds = Dataset(schema, (values, cats), np.zeros(40, dtype=np.int64), ("a",))
    got = transform_dataset(model, ds)
    want = np.stack([transform(model, ds.row(i)) for i in range(ds.n)])
    assert np.array_equal(got, want)


def test_transform_dataset_rejects_schema_mismatch():
    model = hand_model()
    other = Schema((("w", "continuous"), ("y", "label")))
    ds = Dataset(other, (np.zeros(2),), np.zeros(2, dtype=np.int64), ("a",))
    with pytest.raises(BinarizeError, match="do not match"):
        transform_dataset(model, ds)


def test_identity_binarizer_passes_bits_through():
    model = identity_binarizer(("x_1", "x_2"))
    assert model.method == BINARY
    assert model.width == 2
    assert np.array_equal(transform(model, [1.0, -1.0]), [1.0, -1.0])
    assert np.array_equal(transform(model, [0.5, 0.0]), [1.0, -1.0])


@settings(max_examples=30, deadline=None)
@given(st.integers(min_value=0, max_value=2**31 - 1), st.integers(min_value=1, max_value=4))
def test_fitted_transform_has_full_width(seed, k):
    rng = np.random.default_rng(seed)
    ds = continuous_dataset(rng.normal(size=20))
    model = fit(RANINT, ds, k=k, seed=seed)
    assert model.width == 2 * k
    bits = transform_dataset(model, ds)
    assert bits.shape == (20, 2 * k)
    assert set(np.unique(bits)) <= {-1.0, 1.0}


@settings(max_examples=30, deadline=None)
@given(st.integers(min_value=0, max_value=2**31 - 1), st.integers(min_value=1, max_value=4))
def test_transform_is_monotone_in_the_raw_value(seed, k):
    # raising a continuous value can only turn greater_than bits on (and
    # less_than bits off), never the reverse
    rng = np.random.default_rng(seed)
    ds = continuous_dataset(rng.normal(size=20))
    model = fit(RANINT, ds, k=k, seed=seed)
    values = np.sort(rng.normal(size=8))
    bits = np.stack([transform(model, [v]) for v in values])
    greater = np.array([s.kind == GREATER_THAN for s in model.specs])
    assert np.all(np.diff(bits[:, greater], axis=0) >= 0)
    assert np.all(np.diff(bits[:, ~greater], axis=0) <= 0)


def test_feature_index_rejects_unknown_name():
    with pytest.raises(BinarizeError, match="unknown feature"):
        hand_model().feature_index("nope")


# ------------------------------------------------------------ round trips ---


def test_dict_round_trip_is_exact():
    ds = continuous_dataset([1.0, 2.0, 9.0, 10.0], labels=[0, 0, 1, 1])
    model = fit(ENTINT, ds, k=2, seed=3)
    assert binarizer_from_dict(binarizer_to_dict(model)) == model


def test_file_round_trip_is_exact(tmp_path):
    model = hand_model()
    path = tmp_path / "binarizer.json"
    save_binarizer(model, path)
    assert load_binarizer(path) == model


def test_from_dict_names_missing_fields():
    payload = binarizer_to_dict(hand_model())
    del payload["specs"]
    with pytest.raises(BinarizeError, match="missing field 'specs'"):
        binarizer_from_dict(payload)
    payload = binarizer_to_dict(hand_model())
    del payload["specs"][0]["threshold"]
    with pytest.raises(BinarizeError, match="spec 0 missing field 'threshold'"):
        binarizer_from_dict(payload)
