"""Tabular dataset handling: schema sidecars, delimited loading, CV splits,
and a seeded Bernoulli generator for rule-recovery experiments."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

CATEGORICAL = "categorical"
CONTINUOUS = "continuous"
LABEL = "label"
_COLUMN_KINDS = (CATEGORICAL, CONTINUOUS, LABEL)

CNF = "cnf"
DNF = "dnf"


class DataError(ValueError):
    """Raised for malformed schemas, data files, or generator arguments."""


# ---------------------------------------------------------------- schema ----


@dataclass(frozen=True)
class Schema:
    """Ordered column declarations: (name, kind) with exactly one label."""

    columns: tuple[tuple[str, str], ...]

    def __post_init__(self):
        names = [name for name, _ in self.columns]
        if len(set(names)) != len(names):
            raise DataError("schema has duplicate column names")
        for name, kind in self.columns:
            if kind not in _COLUMN_KINDS:
                raise DataError(f"column {name!r} has unknown kind {kind!r}")
        labels = [name for name, kind in self.columns if kind == LABEL]
        if len(labels) != 1:
            raise DataError(f"schema must declare exactly one label column, found {len(labels)}")
        if len(self.columns) < 2:
            raise DataError("schema must declare at least one feature column")

    @property
    def feature_columns(self) -> tuple[tuple[str, str], ...]:
        return tuple((n, k) for n, k in self.columns if k != LABEL)

    @property
    def feature_names(self) -> tuple[str, ...]:
        return tuple(n for n, _ in self.feature_columns)

    @property
    def label_name(self) -> str:
        return next(n for n, k in self.columns if k == LABEL)

    @classmethod
    def from_file(cls, path) -> "Schema":
        columns = []
        for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
            line = raw.strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise DataError(f"schema line {lineno}: expected '<name> <kind>', got {raw!r}")
            columns.append((parts[0], parts[1]))
        if not columns:
            raise DataError(f"schema file {path} is empty")
        return cls(tuple(columns))

    def to_file(self, path) -> None:
        text = "".join(f"{name} {kind}\n" for name, kind in self.columns)
        Path(path).write_text(text)


# --------------------------------------------------------------- dataset ----


@dataclass(frozen=True)
class Dataset:
    """Columnar dataset: raw feature columns in schema order plus integer labels."""

    schema: Schema
    columns: tuple[np.ndarray, ...]
    labels: np.ndarray
    class_names: tuple[str, ...]

    def __post_init__(self):
        n = len(self.labels)
        if any(len(col) != n for col in self.columns):
            raise DataError("feature columns and labels disagree on row count")
        if len(self.columns) != len(self.schema.feature_columns):
            raise DataError("column count does not match schema")
        if n and (self.labels.min() < 0 or self.labels.max() >= len(self.class_names)):
            raise DataError("label ids out of range")

    @property
    def n(self) -> int:
        return len(self.labels)

    @property
    def class_count(self) -> int:
        return len(self.class_names)

    def row(self, i: int) -> tuple:
        return tuple(col[i] for col in self.columns)

    def subset(self, indices) -> "Dataset":
        idx = np.asarray(indices)
        return Dataset(
            schema=self.schema,
            columns=tuple(col[idx] for col in self.columns),
            labels=self.labels[idx],
            class_names=self.class_names,
        )


def load_dataset(path, schema: Schema, delimiter: str = ",") -> Dataset:
    """Read a delimited file with a header row; intern labels in first-seen order."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty dataset (no header row)") from None
        declared = [name for name, _ in schema.columns]
        missing = [n for n in declared if n not in header]
        if missing:
            raise DataError(f"{path}: header is missing column {missing[0]!r}")
        extra = [n for n in header if n not in declared]
        if extra:
            raise DataError(f"{path}: header has unexpected column {extra[0]!r}")
        col_pos = {name: header.index(name) for name in declared}

        raw_rows = [row for row in reader if row]
    if not raw_rows:
        raise DataError(f"{path}: empty dataset (no data rows)")

    feature_cols = schema.feature_columns
    cells: dict[str, list] = {name: [] for name, _ in feature_cols}
    label_values: list[str] = []
    for rowno, row in enumerate(raw_rows, start=1):
        if len(row) != len(header):
            raise DataError(f"{path}: row {rowno} has {len(row)} fields, expected {len(header)}")
        for name, kind in feature_cols:
            value = row[col_pos[name]].strip()
            if kind == CONTINUOUS:
                try:
                    parsed = float(value)
                except ValueError:
                    raise DataError(
                        f"{path}: row {rowno}, column {name!r}: cannot parse {value!r} as a number"
                    ) from None
                if not math.isfinite(parsed):
                    raise DataError(f"{path}: row {rowno}, column {name!r}: non-finite value {value!r}")
                cells[name].append(parsed)
            else:
                if value == "":
                    raise DataError(f"{path}: row {rowno}, column {name!r}: empty categorical value")
                cells[name].append(value)
        label_values.append(row[col_pos[schema.label_name]].strip())

    class_names: list[str] = []
    class_ids: dict[str, int] = {}
    labels = np.empty(len(label_values), dtype=np.int64)
    for i, value in enumerate(label_values):
        if value not in class_ids:
            class_ids[value] = len(class_names)
            class_names.append(value)
        labels[i] = class_ids[value]

    columns = tuple(
        np.array(cells[name], dtype=np.float64 if kind == CONTINUOUS else np.str_)
        for name, kind in feature_cols
    )
    return Dataset(schema=schema, columns=columns, labels=labels, class_names=tuple(class_names))


def save_dataset(dataset: Dataset, path, delimiter: str = ",") -> None:
    """Write a dataset back to a delimited file (header + raw values)."""
    names = [name for name, _ in dataset.schema.columns]
    label_name = dataset.schema.label_name
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, delimiter=delimiter)
        writer.writerow(names)
        feature_by_name = dict(zip(dataset.schema.feature_names, dataset.columns))
        kinds = dict(dataset.schema.columns)
        for i in range(dataset.n):
            row = []
            for name in names:
                if name == label_name:
                    row.append(dataset.class_names[dataset.labels[i]])
                else:
                    value = feature_by_name[name][i]
                    row.append(repr(float(value)) if kinds[name] == CONTINUOUS else str(value))
            writer.writerow(row)


# ---------------------------------------------------------------- splits ----


def kfold_split(dataset: Dataset, k: int, seed: int) -> list[tuple[Dataset, Dataset]]:
    """Seeded k-fold partition; first n%k folds take the extra row."""
    if k < 2:
        raise DataError(f"k-fold split needs k >= 2, got {k}")
    if k > dataset.n:
        raise DataError(f"cannot split {dataset.n} rows into {k} folds")
    perm = np.random.default_rng(seed).permutation(dataset.n)
    base, extra = divmod(dataset.n, k)
    folds = []
    start = 0
    for i in range(k):
        size = base + (1 if i < extra else 0)
        test_idx = perm[start : start + size]
        train_idx = np.concatenate([perm[:start], perm[start + size :]])
        folds.append((dataset.subset(train_idx), dataset.subset(test_idx)))
        start += size
    return folds


def holdout_split(dataset: Dataset, test_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Seeded unstratified train/test split."""
    if not 0.0 < test_fraction < 1.0:
        raise DataError(f"test fraction must be in (0, 1), got {test_fraction}")
    perm = np.random.default_rng(seed).permutation(dataset.n)
    n_test = int(round(dataset.n * test_fraction))
    if n_test == 0 or n_test == dataset.n:
        raise DataError("holdout split leaves an empty side")
    return dataset.subset(perm[n_test:]), dataset.subset(perm[:n_test])


# ------------------------------------------------------ synthetic ground ----


@dataclass(frozen=True)
class GroundTruthRule:
    """Two-level boolean formula over +/-1 variables.

    clauses holds (var_index, negated) literals; for ``cnf`` the clauses are
    OR-ed together and AND-ed at the top, for ``dnf`` the dual. A single-clause
    rule may use either form.
    """

    form: str
    clauses: tuple[tuple[tuple[int, bool], ...], ...]

    def __post_init__(self):
        if self.form not in (CNF, DNF):
            raise DataError(f"unknown rule form {self.form!r}")
        if not self.clauses:
            raise DataError("rule has no clauses")
        for clause in self.clauses:
            if not clause:
                raise DataError("rule has an empty clause")
            for var, negated in clause:
                if var < 0:
                    raise DataError(f"negative variable index {var}")
                if not isinstance(negated, bool):
                    raise DataError("literal negation flag must be a bool")

    @property
    def max_var(self) -> int:
        return max(var for clause in self.clauses for var, _ in clause)

    def evaluate(self, bits: np.ndarray) -> np.ndarray:
        """Evaluate on rows of +/-1 assignments; returns a bool array (or scalar)."""
        arr = np.asarray(bits, dtype=np.float64)
        single = arr.ndim == 1
        rows = arr[None, :] if single else arr
        if self.max_var >= rows.shape[1]:
            raise DataError(f"rule references variable {self.max_var}, input has {rows.shape[1]}")
        clause_vals = []
        for clause in self.clauses:
            lits = np.stack([(rows[:, v] < 0) if neg else (rows[:, v] > 0) for v, neg in clause])
            clause_vals.append(lits.all(0) if self.form == DNF else lits.any(0))
        stacked = np.stack(clause_vals)
        out = stacked.all(0) if self.form == CNF else stacked.any(0)
        return bool(out[0]) if single else out


def generate_synthetic(rule: GroundTruthRule, n: int, var_count: int, seed: int) -> Dataset:
    """Sample n rows of +/-1 Bernoulli variables labeled by the rule.

    Per-variable probabilities p_i ~ U(0,1) are the first draw from the seeded
    generator, the n x var_count sample matrix the second; label 1 means the
    rule holds. Features are emitted as pre-binarized +/-1 continuous columns
    named x_1..x_{var_count}.
    """
    if n < 1:
        raise DataError(f"need at least one sample, got n={n}")
    if var_count < 1:
        raise DataError(f"need at least one variable, got {var_count}")
    if rule.max_var >= var_count:
        raise DataError(f"rule references variable {rule.max_var}, only {var_count} available")
    rng = np.random.default_rng(seed)
    p = rng.random(var_count)
    bits = np.where(rng.random((n, var_count)) < p, 1.0, -1.0)
    labels = rule.evaluate(bits).astype(np.int64)
    schema = Schema(tuple((f"x_{i + 1}", CONTINUOUS) for i in range(var_count)) + (("y", LABEL),))
    return Dataset(
        schema=schema,
        columns=tuple(bits[:, i].copy() for i in range(var_count)),
        labels=labels,
        class_names=("0", "1"),
    )
