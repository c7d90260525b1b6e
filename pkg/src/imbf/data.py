"""Labeled tabular datasets: loading, inspection, standardization, folds.

A :class:`Dataset` is the currency of the whole pipeline. Arrays inside it
are marked read-only so a dataset can be shared between folds and workers
without defensive copies.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd

from .errors import (
    EmptyDatasetError,
    InsufficientMinorityError,
    LabelError,
    MissingValuesError,
    ParseError,
    SchemaError,
    DegenerateLabelsError,
)

log = logging.getLogger(__name__)

LABEL_COLUMN = "Class"
KAGGLE_FEATURES = ["Time", *[f"V{i}" for i in range(1, 29)], "Amount"]
SCHEMA_MODES = ("kaggle_creditcard", "generic")
ORIGIN_COLUMN = "origin"


def _frozen(a, dtype):
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    feature_names: tuple
    row_ids: np.ndarray = None

    def __post_init__(self):
        X = _frozen(self.features, np.float64)
        if X.ndim != 2:
            raise SchemaError(f"features must be 2-D, got shape {X.shape}")
        y = _frozen(self.labels, np.int64)
        ids = np.arange(len(X)) if self.row_ids is None else self.row_ids
        ids = _frozen(ids, np.int64)
        names = tuple(str(n) for n in self.feature_names)
        if not (len(X) == len(y) == len(ids)):
            raise SchemaError(
                f"row count mismatch: features={len(X)} labels={len(y)} row_ids={len(ids)}"
            )
        if len(names) != X.shape[1]:
            raise SchemaError(f"{len(names)} feature names for {X.shape[1]} columns")
        if len(y) and not np.isin(y, (0, 1)).all():
            raise LabelError("labels must be 0 or 1")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "row_ids", ids)
        object.__setattr__(self, "feature_names", names)

    @property
    def n_rows(self) -> int:
        return len(self.labels)

    @property
    def n_cols(self) -> int:
        return self.features.shape[1]

    @property
    def n_fraud(self) -> int:
        return int(self.labels.sum())

    def subset(self, index) -> "Dataset":
        index = np.asarray(index)
        return Dataset(self.features[index], self.labels[index], self.feature_names, self.row_ids[index])

    def with_features(self, features) -> "Dataset":
        return Dataset(features, self.labels, self.feature_names, self.row_ids)

    def has_missing(self) -> bool:
        return bool(np.isnan(self.features).any())

    def require_trainable(self) -> None:
        """Reject datasets that training operations cannot consume."""
        if self.n_rows == 0:
            raise EmptyDatasetError("dataset has no rows")
        if not np.isfinite(self.features).all():
            raise MissingValuesError(
                "dataset contains missing or non-finite values; drop or impute them first"
            )
        n_pos = self.n_fraud
        if n_pos == 0 or n_pos == self.n_rows:
            raise DegenerateLabelsError("training requires at least one row of each class")


def concat(parts: Sequence[Dataset]) -> Dataset:
    first = parts[0]
    return Dataset(
        np.vstack([p.features for p in parts]),
        np.concatenate([p.labels for p in parts]),
        first.feature_names,
        np.concatenate([p.row_ids for p in parts]),
    )


# --------------------------------------------------------------------------- io


def _locate_bad_cell(path, columns):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader)]
        wanted = set(columns)
        for r, row in enumerate(reader, start=1):
            for c, cell in enumerate(row):
                if c < len(header) and header[c] not in wanted:
                    continue
                cell = cell.strip()
                if cell == "":
                    continue
                try:
                    float(cell)
                except ValueError:
                    return r, header[c] if c < len(header) else c, cell
    return None


def load_csv(path, schema_mode: str = "kaggle_creditcard") -> Dataset:
    """Read a labeled CSV.

    In ``kaggle_creditcard`` mode the header must contain ``Time``,
    ``V1``..``V28``, ``Amount`` and ``Class``; in ``generic`` mode the last
    column is the label and every other column is a feature. A column named
    ``origin`` (the provenance column written by ``resample``) is ignored in
    both modes. Empty cells are kept as NaN so :func:`inspect` can report them.
    """
    if schema_mode not in SCHEMA_MODES:
        raise SchemaError(f"unknown schema mode {schema_mode!r}; expected one of {SCHEMA_MODES}")
    path = Path(path)
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            header = next(csv.reader(fh), None)
    except FileNotFoundError:
        raise SchemaError(f"input file not found: {path}") from None
    if not header or all(h.strip() == "" for h in header):
        raise SchemaError(f"{path}: missing header row")
    header = [h.strip() for h in header]
    if all(_is_number(h) for h in header):
        raise SchemaError(f"{path}: first row looks like data, not a header")

    if schema_mode == "kaggle_creditcard":
        missing = [c for c in [*KAGGLE_FEATURES, LABEL_COLUMN] if c not in header]
        if missing:
            raise SchemaError(f"{path}: header lacks required columns {missing}")
        label_col = LABEL_COLUMN
        feature_cols = KAGGLE_FEATURES
    else:
        data_cols = [h for h in header if h != ORIGIN_COLUMN]
        if len(data_cols) < 2:
            raise SchemaError(f"{path}: need at least one feature column and a label column")
        label_col = data_cols[-1]
        feature_cols = data_cols[:-1]

    try:
        frame = pd.read_csv(path, usecols=[*feature_cols, label_col], dtype=np.float64,
                            skipinitialspace=True, float_precision="round_trip")
    except ValueError:
        hit = _locate_bad_cell(path, [*feature_cols, label_col])
        if hit is None:
            raise ParseError(f"{path}: could not parse numeric data") from None
        row, col, cell = hit
        raise ParseError(f"{path}: non-numeric cell {cell!r} at row {row}, column {col}", row, col) from None

    if len(frame) == 0:
        raise EmptyDatasetError(f"{path}: header present but no data rows")
    labels = frame[label_col].to_numpy()
    bad = ~np.isin(labels, (0.0, 1.0))
    if bad.any():
        r = int(np.flatnonzero(bad)[0]) + 1
        raise LabelError(f"{path}: label {labels[r - 1]!r} at row {r} is not 0 or 1")
    return Dataset(frame[feature_cols].to_numpy(), labels.astype(np.int64), feature_cols)


def _is_number(s):
    try:
        float(s)
    except ValueError:
        return False
    return True


def write_csv(ds: Dataset, path, extra_columns: dict | None = None, label_name: str = LABEL_COLUMN) -> None:
    """Write ``ds`` in the same CSV shape :func:`load_csv` reads.

    Floats are written with ``repr`` so a load/write round trip is exact.
    """
    extra_columns = extra_columns or {}
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([*ds.feature_names, label_name, *extra_columns])
        extra = list(extra_columns.values())
        for i in range(ds.n_rows):
            row = [repr(float(v)) if not math.isnan(v) else "" for v in ds.features[i]]
            row.append(str(int(ds.labels[i])))
            row.extend(str(col[i]) for col in extra)
            w.writerow(row)


# -------------------------------------------------------------------- inspect


@dataclass(frozen=True)
class InspectionReport:
    n_rows: int
    n_fraud: int
    fraud_fraction: float
    missing_per_column: dict
    per_column_stats: dict  # column -> (min, max, mean, std)

    def to_dict(self) -> dict:
        return {
            "n_rows": self.n_rows,
            "n_fraud": self.n_fraud,
            "fraud_fraction": self.fraud_fraction,
            "missing_per_column": dict(self.missing_per_column),
            "per_column_stats": {
                k: dict(zip(("min", "max", "mean", "std"), v)) for k, v in self.per_column_stats.items()
            },
        }

    def summary(self) -> str:
        n_missing = sum(self.missing_per_column.values())
        return (
            f"rows={self.n_rows} fraud={self.n_fraud} "
            f"fraud_fraction={self.fraud_fraction:.5f} missing_cells={n_missing}"
        )


def inspect(ds: Dataset) -> InspectionReport:
    """Class balance, missing counts and per-column stats (population std, NaN-skipping)."""
    if ds.n_rows == 0:
        raise EmptyDatasetError("cannot inspect an empty dataset")
    X = ds.features
    missing = np.isnan(X).sum(axis=0)
    stats = {}
    for j, name in enumerate(ds.feature_names):
        col = X[:, j]
        col = col[~np.isnan(col)]
        if len(col) == 0:
            stats[name] = (math.nan, math.nan, math.nan, math.nan)
        else:
            stats[name] = (float(col.min()), float(col.max()), float(col.mean()), float(col.std()))
    n_fraud = ds.n_fraud
    return InspectionReport(
        n_rows=ds.n_rows,
        n_fraud=n_fraud,
        fraud_fraction=n_fraud / ds.n_rows,
        missing_per_column={n: int(m) for n, m in zip(ds.feature_names, missing)},
        per_column_stats=stats,
    )


def resolve_missing(ds: Dataset, policy: str) -> Dataset:
    """Apply the ``reject`` / ``drop`` / ``impute`` missing-value policy."""
    if not ds.has_missing():
        return ds
    if policy == "reject":
        raise MissingValuesError("dataset contains missing values (use --missing drop or impute)")
    if policy == "drop":
        keep = ~np.isnan(ds.features).any(axis=1)
        out = ds.subset(np.flatnonzero(keep))
        if out.n_rows == 0:
            raise EmptyDatasetError("every row had a missing value")
        return out
    if policy == "impute":
        X = ds.features.copy()
        means = np.nanmean(X, axis=0)
        means = np.where(np.isnan(means), 0.0, means)
        r, c = np.nonzero(np.isnan(X))
        X[r, c] = means[c]
        return ds.with_features(X)
    raise ValueError(f"unknown missing-value policy {policy!r}")


# ---------------------------------------------------------------- standardize


@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray
    std: np.ndarray
    constant_columns: tuple = ()

    def transform(self, X) -> np.ndarray:
        return (np.asarray(X, dtype=np.float64) - self.mean) / self.std

    def inverse_transform(self, Z) -> np.ndarray:
        return np.asarray(Z, dtype=np.float64) * self.std + self.mean

    def apply(self, ds: Dataset) -> Dataset:
        return ds.with_features(self.transform(ds.features))

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist(), "constant_columns": list(self.constant_columns)}

    @classmethod
    def from_dict(cls, d) -> "Standardizer":
        return cls(np.array(d["mean"], dtype=np.float64), np.array(d["std"], dtype=np.float64), tuple(d["constant_columns"]))


def fit_standardizer(train: Dataset) -> Standardizer:
    if train.n_rows == 0:
        raise EmptyDatasetError("cannot fit a standardizer on zero rows")
    mean = train.features.mean(axis=0)
    std = train.features.std(axis=0)
    const = std == 0
    if const.any():
        names = tuple(n for n, c in zip(train.feature_names, const) if c)
        log.warning("constant columns %s: std clamped to 1", list(names))
    else:
        names = ()
    std = np.where(const, 1.0, std)
    mean.setflags(write=False)
    std.setflags(write=False)
    return Standardizer(mean, std, names)


def standardize_fit_transform(train: Dataset, apply_to: Sequence[Dataset] = ()):
    """Fit on ``train`` only; return the scaler, scaled train, and scaled ``apply_to`` sets."""
    scaler = fit_standardizer(train)
    return scaler, scaler.apply(train), [scaler.apply(d) for d in apply_to]


# ---------------------------------------------------------------------- folds


@dataclass(frozen=True)
class FoldPlan:
    k: int
    assignments: np.ndarray  # fold index per row, aligned with the dataset rows
    row_ids: np.ndarray = field(default=None)

    def test_index(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments == fold)

    def train_index(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments != fold)


def stratified_kfold(ds: Dataset, k: int, seed: int) -> FoldPlan:
    """Shuffle each class with ``seed`` and deal its rows round-robin into ``k`` folds.

    The majority class continues dealing where the minority class stopped so
    fold sizes differ by at most one row overall.
    """
    if k < 2:
        raise ValueError("k must be at least 2")
    y = ds.labels
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    if min(n_pos, n_neg) < k:
        raise InsufficientMinorityError(
            f"minority class has {min(n_pos, n_neg)} rows, fewer than k={k} folds"
        )
    rng = np.random.default_rng(seed)
    assign = np.empty(len(y), dtype=np.int64)
    pos = rng.permutation(np.flatnonzero(y == 1))
    neg = rng.permutation(np.flatnonzero(y == 0))
    assign[pos] = np.arange(len(pos)) % k
    assign[neg] = (np.arange(len(neg)) + len(pos)) % k
    assign.setflags(write=False)
    return FoldPlan(k, assign, ds.row_ids)


# ------------------------------------------------------------------ synthetic


def make_synthetic(n_major: int, n_minor: int, d: int, separation: float, seed: int) -> Dataset:
    """Two isotropic Gaussian blobs: label 0 at the origin, label 1 at ``separation * ones``."""
    if n_major < 1 or n_minor < 1 or d < 1 or separation < 0:
        raise ValueError("need n_major, n_minor, d >= 1 and separation >= 0")
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n_major + n_minor, d))
    y = np.zeros(n_major + n_minor, dtype=np.int64)
    y[n_major:] = 1
    X[n_major:] += separation
    order = rng.permutation(len(y))
    return Dataset(X[order], y[order], [f"x{j}" for j in range(d)])


def subsample_majority(ds: Dataset, max_majority: int | None, seed: int) -> Dataset:
    """Keep every minority row and at most ``max_majority`` uniformly drawn majority rows.

    Original row order is preserved.
    """
    if max_majority is None:
        return ds
    neg = np.flatnonzero(ds.labels == 0)
    if len(neg) <= max_majority:
        return ds
    rng = np.random.default_rng(seed)
    keep_neg = rng.choice(neg, size=max_majority, replace=False)
    keep = np.sort(np.concatenate([np.flatnonzero(ds.labels == 1), keep_neg]))
    return ds.subset(keep)
