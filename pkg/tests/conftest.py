"""Shared fixtures: synthetic rule data, a small trained model, and the wine benchmark."""
from __future__ import annotations

import numpy as np
import pytest

from rulenet import (
    CNF,
    Dataset,
    GroundTruthRule,
    Schema,
    generate_synthetic,
    holdout_split,
    save_dataset,
)
from rulenet.train import TrainConfig, train

# (x_1 ∨ x_2) ∧ ¬x_3 — small enough to verify by exhaustive truth table
GUARD_RULE = GroundTruthRule(CNF, (((0, False), (1, False)), ((2, True),)))


@pytest.fixture(scope="session")
def synthetic_dataset() -> Dataset:
    return generate_synthetic(GUARD_RULE, n=600, var_count=3, seed=7)


@pytest.fixture(scope="session")
def small_trained(synthetic_dataset):
    """A quick 8@8 model on pre-binarized synthetic data, plus its splits."""
    train_ds, test_ds = holdout_split(synthetic_dataset, 0.5, seed=7)
    config = TrainConfig(k1=8, k2=8, binning="binary", l2=1e-6, epochs=3, seed=3)
    model, history = train(train_ds, config, validation=test_ds)
    return model, history, config, train_ds, test_ds


@pytest.fixture(scope="session")
def synthetic_files(synthetic_dataset, tmp_path_factory):
    """The synthetic dataset materialized as CSV + schema sidecar for CLI runs."""
    root = tmp_path_factory.mktemp("synthetic")
    data_path = root / "data.csv"
    schema_path = root / "data.schema"
    save_dataset(synthetic_dataset, data_path)
    synthetic_dataset.schema.to_file(schema_path)
    return data_path, schema_path


def load_wine_dataset() -> Dataset:
    """The 178-row wine benchmark as a Dataset (13 continuous features, 3 classes)."""
    from sklearn.datasets import load_wine

    raw = load_wine()
    names = tuple(n.replace(" ", "_").replace("/", "_") for n in raw.feature_names)
    schema = Schema(tuple((n, "continuous") for n in names) + (("class", "label"),))
    columns = tuple(np.asarray(raw.data[:, i], dtype=np.float64) for i in range(len(names)))
    return Dataset(
        schema=schema,
        columns=columns,
        labels=raw.target.astype(np.int64),
        class_names=tuple(str(t) for t in raw.target_names),
    )


@pytest.fixture(scope="session")
def wine_dataset() -> Dataset:
    return load_wine_dataset()


@pytest.fixture(scope="session")
def wine_files(wine_dataset, tmp_path_factory):
    root = tmp_path_factory.mktemp("wine")
    data_path = root / "wine.csv"
    schema_path = root / "wine.schema"
    save_dataset(wine_dataset, data_path)
    wine_dataset.schema.to_file(schema_path)
    return data_path, schema_path


def random_bits(rng: np.random.Generator, n: int, d: int) -> np.ndarray:
    return np.where(rng.random((n, d)) < 0.5, 1.0, -1.0)
