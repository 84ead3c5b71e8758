"""Feature-to-±1 literal binarization with an invertible description per bit.

Continuous features become 2k threshold bits (k lower bounds rendered as
``name > t``, k upper bounds rendered as ``name < t``); categorical features
become ±1 one-hot blocks. Threshold selection: random in-range sampling
(default), 1-d k-means midpoints, or entropy-minimizing splits.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import CATEGORICAL, CONTINUOUS, Dataset

RANINT = "ranint"
KINT = "kint"
ENTINT = "entint"
BINARY = "binary"  # features are already ±1 bits; passthrough
FIT_METHODS = (RANINT, KINT, ENTINT)

ONE_HOT = "one_hot"
GREATER_THAN = "greater_than"
LESS_THAN = "less_than"
IDENTITY = "identity"


class BinarizeError(ValueError):
    """Raised for invalid binarizer arguments or malformed serialized files."""


def q(x):
    """Hard sign with ties to −1: +1 where x > 0, else −1."""
    arr = np.where(np.asarray(x, dtype=np.float64) > 0, 1.0, -1.0)
    return float(arr) if arr.ndim == 0 else arr


# ---------------------------------------------------------------- model -----


@dataclass(frozen=True)
class LiteralSpec:
    """One output bit: a threshold test, a category match, or a raw ±1 bit."""

    feature: str
    kind: str
    threshold: float | None = None
    category: str | None = None

    def __post_init__(self):
        if self.kind not in (ONE_HOT, GREATER_THAN, LESS_THAN, IDENTITY):
            raise BinarizeError(f"unknown literal kind {self.kind!r}")
        if self.kind in (GREATER_THAN, LESS_THAN):
            if self.threshold is None or not np.isfinite(self.threshold):
                raise BinarizeError(f"literal for {self.feature!r} needs a finite threshold")
        if self.kind == ONE_HOT and self.category is None:
            raise BinarizeError(f"one-hot literal for {self.feature!r} needs a category")

    def describe(self, negated: bool = False) -> str:
        if self.kind == ONE_HOT:
            body = f"{self.feature} = {self.category}"
        elif self.kind == GREATER_THAN:
            body = f"{self.feature} > {self.threshold:.3f}"
        elif self.kind == LESS_THAN:
            body = f"{self.feature} < {self.threshold:.3f}"
        else:
            body = self.feature
        return f"¬{body}" if negated else body


@dataclass(frozen=True)
class BinarizerModel:
    """Fitted feature-to-bit mapping; specs order defines the bit layout."""

    method: str
    bins: int
    seed: int
    feature_names: tuple[str, ...]
    feature_kinds: tuple[str, ...]
    specs: tuple[LiteralSpec, ...]

    @property
    def width(self) -> int:
        return len(self.specs)

    def feature_index(self, name: str) -> int:
        try:
            return self.feature_names.index(name)
        except ValueError:
            raise BinarizeError(f"unknown feature {name!r}") from None


# ------------------------------------------------------------------ fit -----


def fit(method: str, train: Dataset, k: int, seed: int) -> BinarizerModel:
    """Fit thresholds/vocabularies on a training split; pure given (inputs, seed)."""
    if method not in FIT_METHODS:
        raise BinarizeError(f"unknown binning method {method!r}")
    if k < 1:
        raise BinarizeError(f"bins per feature must be >= 1, got {k}")
    if train.n == 0:
        raise BinarizeError("cannot fit a binarizer on an empty training split")
    rng = np.random.default_rng(seed)
    specs: list[LiteralSpec] = []
    for (name, kind), col in zip(train.schema.feature_columns, train.columns):
        if kind == CATEGORICAL:
            for cat in np.unique(col):
                specs.append(LiteralSpec(name, ONE_HOT, category=str(cat)))
        else:
            specs.extend(_continuous_specs(method, name, col, train.labels, k, rng))
    return BinarizerModel(
        method=method,
        bins=k,
        seed=seed,
        feature_names=train.schema.feature_names,
        feature_kinds=tuple(kind for _, kind in train.schema.feature_columns),
        specs=tuple(specs),
    )


def identity_binarizer(feature_names) -> BinarizerModel:
    """Passthrough binarizer for data whose features are already ±1 bits."""
    names = tuple(feature_names)
    return BinarizerModel(
        method=BINARY,
        bins=1,
        seed=0,
        feature_names=names,
        feature_kinds=tuple(CONTINUOUS for _ in names),
        specs=tuple(LiteralSpec(name, IDENTITY) for name in names),
    )


def _continuous_specs(method, name, col, labels, k, rng):
    values = np.asarray(col, dtype=np.float64)
    lo, hi = float(values.min()), float(values.max())
    if lo == hi:
        warnings.warn(f"feature {name!r} is constant on the training split; all its bits degenerate")
        lows = highs = [lo] * k
    elif method == RANINT:
        lows = sorted(float(t) for t in rng.uniform(lo, hi, size=k))
        highs = sorted(float(t) for t in rng.uniform(lo, hi, size=k))
    else:
        if method == KINT:
            centers = _kmeans_1d(values, k, rng)
            thresholds = [(centers[i] + centers[i + 1]) / 2.0 for i in range(len(centers) - 1)]
        else:
            thresholds = _entropy_thresholds(values, labels, k)
        if not thresholds:
            thresholds = [float(np.median(values))]
        lows = highs = _pad_thresholds(thresholds, k)
    return [LiteralSpec(name, GREATER_THAN, threshold=t) for t in lows] + [
        LiteralSpec(name, LESS_THAN, threshold=t) for t in highs
    ]


def _pad_thresholds(thresholds, k):
    """Pad to exactly k by duplicating the extreme thresholds, alternating ends."""
    ts = sorted(float(t) for t in thresholds)[:k]
    append_high = True
    while len(ts) < k:
        if append_high:
            ts.append(ts[-1])
        else:
            ts.insert(0, ts[0])
        append_high = not append_high
    return ts


def _kmeans_1d(values, k, rng, max_iter=100):
    """Lloyd's algorithm on a 1-d sample; returns sorted cluster centers."""
    uniq = np.unique(values)
    if len(uniq) <= k:
        return [float(u) for u in uniq]
    centers = np.sort(rng.choice(uniq, size=k, replace=False).astype(np.float64))
    for _ in range(max_iter):
        assign = np.argmin(np.abs(values[:, None] - centers[None, :]), axis=1)
        new = centers.copy()
        for c in range(k):
            members = values[assign == c]
            if len(members):
                new[c] = members.mean()
        new = np.sort(new)
        if np.array_equal(new, centers):
            break
        centers = new
    return [float(c) for c in centers]


def _class_entropy(counts, total):
    # counts: (..., C) float; natural-log entropy of each row's distribution
    with np.errstate(divide="ignore", invalid="ignore"):
        logc = np.where(counts > 0, np.log(np.where(counts > 0, counts, 1.0)), 0.0)
    s = (counts * logc).sum(axis=-1)
    return np.where(total > 0, np.log(np.where(total > 0, total, 1.0)) - s / np.where(total > 0, total, 1.0), 0.0)


def _best_split(values, labels):
    """Best midpoint threshold by weighted child entropy; None if no candidate."""
    order = np.argsort(values, kind="stable")
    v = values[order]
    y = labels[order]
    boundaries = np.flatnonzero(v[1:] > v[:-1])
    if len(boundaries) == 0:
        return None
    classes = np.unique(y)
    onehot = (y[:, None] == classes[None, :]).astype(np.float64)
    cum = np.cumsum(onehot, axis=0)
    total = cum[-1]
    n = float(len(y))
    n_left = (boundaries + 1).astype(np.float64)
    left_counts = cum[boundaries]
    right_counts = total[None, :] - left_counts
    h_left = _class_entropy(left_counts, n_left)
    h_right = _class_entropy(right_counts, n - n_left)
    child = (n_left * h_left + (n - n_left) * h_right) / n
    parent = float(_class_entropy(total[None, :], np.array([n]))[0])
    gains = parent - child
    best = int(np.argmax(gains))  # ties resolve to the lowest threshold
    threshold = float((v[boundaries[best]] + v[boundaries[best] + 1]) / 2.0)
    return threshold, float(gains[best])


def _entropy_thresholds(values, labels, k):
    """Greedy best-first entropy-minimizing binary splits, at most k thresholds."""
    segments = [(values, labels)]
    thresholds: list[float] = []
    while len(thresholds) < k:
        best = None
        for si, (v, y) in enumerate(segments):
            found = _best_split(v, y)
            if found is None:
                continue
            threshold, gain = found
            if gain <= 1e-12:
                continue
            key = (gain, -threshold, -si)
            if best is None or key > best[0]:
                best = (key, si, threshold)
        if best is None:
            break
        _, si, threshold = best
        v, y = segments.pop(si)
        left = v <= threshold
        segments.append((v[left], y[left]))
        segments.append((v[~left], y[~left]))
        thresholds.append(threshold)
    return sorted(thresholds)


# ------------------------------------------------------------- transform ----


def transform(model: BinarizerModel, row) -> np.ndarray:
    """Map one raw instance (feature values in schema order) to a ±1 bit vector."""
    out = np.empty(model.width, dtype=np.float64)
    for b, spec in enumerate(model.specs):
        value = row[model.feature_index(spec.feature)]
        if spec.kind == ONE_HOT:
            out[b] = 1.0 if str(value) == spec.category else -1.0
        elif spec.kind == GREATER_THAN:
            out[b] = 1.0 if (float(value) - spec.threshold) > 0 else -1.0
        elif spec.kind == LESS_THAN:
            out[b] = 1.0 if (spec.threshold - float(value)) > 0 else -1.0
        else:
            out[b] = 1.0 if float(value) > 0 else -1.0
    return out


def transform_dataset(model: BinarizerModel, dataset: Dataset) -> np.ndarray:
    """Vectorized transform of a whole dataset to an (n, width) ±1 matrix."""
    if tuple(dataset.schema.feature_names) != model.feature_names:
        raise BinarizeError("dataset features do not match the fitted binarizer")
    out = np.empty((dataset.n, model.width), dtype=np.float64)
    for b, spec in enumerate(model.specs):
        col = dataset.columns[model.feature_index(spec.feature)]
        if spec.kind == ONE_HOT:
            out[:, b] = np.where(col == spec.category, 1.0, -1.0)
        elif spec.kind == GREATER_THAN:
            out[:, b] = q(col.astype(np.float64) - spec.threshold)
        elif spec.kind == LESS_THAN:
            out[:, b] = q(spec.threshold - col.astype(np.float64))
        else:
            out[:, b] = q(col.astype(np.float64))
    return out


def literal_description(model: BinarizerModel, bit_index: int, negated: bool = False) -> str:
    """Human-readable condition for one bit, e.g. ``duration > 146.719``."""
    if not 0 <= bit_index < model.width:
        raise BinarizeError(f"bit index {bit_index} out of range for width {model.width}")
    return model.specs[bit_index].describe(negated)


# ---------------------------------------------------------- serialization ---


def binarizer_to_dict(model: BinarizerModel) -> dict:
    return {
        "method": model.method,
        "bins": model.bins,
        "seed": model.seed,
        "feature_names": list(model.feature_names),
        "feature_kinds": list(model.feature_kinds),
        "specs": [
            {"feature": s.feature, "kind": s.kind, "threshold": s.threshold, "category": s.category}
            for s in model.specs
        ],
    }


def binarizer_from_dict(payload: dict) -> BinarizerModel:
    for field in ("method", "bins", "seed", "feature_names", "feature_kinds", "specs"):
        if field not in payload:
            raise BinarizeError(f"binarizer payload missing field {field!r}")
    specs = []
    for i, entry in enumerate(payload["specs"]):
        for field in ("feature", "kind", "threshold", "category"):
            if field not in entry:
                raise BinarizeError(f"binarizer spec {i} missing field {field!r}")
        specs.append(
            LiteralSpec(
                feature=entry["feature"],
                kind=entry["kind"],
                threshold=entry["threshold"],
                category=entry["category"],
            )
        )
    return BinarizerModel(
        method=payload["method"],
        bins=payload["bins"],
        seed=payload["seed"],
        feature_names=tuple(payload["feature_names"]),
        feature_kinds=tuple(payload["feature_kinds"]),
        specs=tuple(specs),
    )


def save_binarizer(model: BinarizerModel, path) -> None:
    Path(path).write_text(json.dumps(binarizer_to_dict(model), indent=1, sort_keys=True))


def load_binarizer(path) -> BinarizerModel:
    return binarizer_from_dict(json.loads(Path(path).read_text()))
