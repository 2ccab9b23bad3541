"""Tabular data handling: CSV loading, one-hot encoding, scaling, splits.

A :class:`Dataset` starts life *raw* (as read from a CSV, with string
categorical columns) and becomes *encoded* after :func:`encode`, at which
point ``features`` is a finite float matrix that every learner accepts.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

CLASSIFICATION = "classification"
REGRESSION = "regression"
TASKS = (CLASSIFICATION, REGRESSION)

CATEGORICAL = "categorical"
CONTINUOUS = "continuous"

_MISSING = {"", "na", "nan"}


class DataError(ValueError):
    """Raised for malformed input data (bad CSV, bad response, bad split)."""


class DataWarning(UserWarning):
    pass


@dataclass(frozen=True)
class Column:
    """Metadata for one feature column.

    For raw categorical columns ``levels`` holds the sorted distinct values.
    For encoded indicator columns ``source`` names the original column and
    ``level`` the value the indicator tests for.
    """

    name: str
    kind: str
    levels: tuple[str, ...] = ()
    source: str | None = None
    level: str | None = None


@dataclass(frozen=True)
class Encoding:
    """Recipe mapping raw rows onto the encoded feature layout."""

    raw_columns: tuple[Column, ...]
    kept: tuple[bool, ...]

    def transform(self, raw_rows) -> np.ndarray:
        raw = np.asarray(raw_rows, dtype=object)
        if raw.ndim == 1:
            raw = raw.reshape(1, -1)
        if raw.shape[1] != len(self.raw_columns):
            raise DataError(
                f"expected {len(self.raw_columns)} raw columns, got {raw.shape[1]}"
            )
        blocks = []
        for j, (col, keep) in enumerate(zip(self.raw_columns, self.kept)):
            if not keep:
                continue
            values = raw[:, j]
            if col.kind == CONTINUOUS:
                blocks.append(np.array([float(v) for v in values]).reshape(-1, 1))
            else:
                text = np.array([str(v) for v in values], dtype=object)
                # unseen levels fall through to the all-zeros block
                ind = [(text == lvl).astype(float) for lvl in col.levels[1:]]
                blocks.append(np.column_stack(ind))
        if not blocks:
            return np.zeros((raw.shape[0], 0))
        return np.hstack(blocks)

    def to_dict(self) -> dict:
        return {
            "raw_columns": [
                {"name": c.name, "kind": c.kind, "levels": list(c.levels)}
                for c in self.raw_columns
            ],
            "kept": list(self.kept),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Encoding":
        cols = tuple(
            Column(d["name"], d["kind"], tuple(d.get("levels", ())))
            for d in doc["raw_columns"]
        )
        return cls(cols, tuple(bool(k) for k in doc["kept"]))


@dataclass(frozen=True)
class Dataset:
    name: str
    features: np.ndarray
    response: np.ndarray
    columns: tuple[Column, ...]
    task: str
    encoded: bool = True
    class_labels: tuple[str, ...] = ()
    encoding: Encoding | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.task not in TASKS:
            raise DataError(f"unknown task {self.task!r}")
        n = len(self.response)
        if self.features.ndim != 2 or self.features.shape[0] != n:
            raise DataError("feature matrix rows must equal response length")
        if n < 2:
            raise DataError("a dataset needs at least 2 rows")
        if self.features.shape[1] != len(self.columns):
            raise DataError("column metadata does not match feature width")
        if self.task == CLASSIFICATION:
            values = set(np.unique(self.response).tolist())
            if not values <= {0.0, 1.0}:
                raise DataError("classification response must be coded 0/1")
            if len(values) < 2:
                raise DataError("classification response needs both classes")
        if self.encoded and not np.all(np.isfinite(self.features)):
            raise DataError("encoded features must be finite")

    @property
    def n_rows(self) -> int:
        return len(self.response)

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def is_classification(self) -> bool:
        return self.task == CLASSIFICATION

    def subset(self, rows) -> "Dataset":
        rows = np.asarray(rows, dtype=np.intp)
        return replace(self, features=self.features[rows], response=self.response[rows])


def _parse_float(text: str) -> float | None:
    try:
        value = float(text)
    except ValueError:
        return None
    return value if math.isfinite(value) else None


def _sorted_levels(values) -> list[str]:
    distinct = set(values)
    numeric = {v: _parse_float(v) for v in distinct}
    if all(x is not None for x in numeric.values()):
        return sorted(distinct, key=lambda v: (numeric[v], v))
    return sorted(distinct)


def load_csv(path, response_column, task: str, name: str | None = None) -> Dataset:
    """Read a comma-separated file with a header row into a raw Dataset.

    ``response_column`` is a header name or a 0-based column index.
    Classification labels are mapped to 0/1 by sorted distinct value
    (numeric order when every label parses as a number).
    """
    if task not in TASKS:
        raise DataError(f"unknown task {task!r}")
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such file: {path}")
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        rows = []
        lines = []
        for row in reader:
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                raise DataError(
                    f"{path}:{reader.line_num}: expected {len(header)} fields, got {len(row)}"
                )
            for cell in row:
                if cell.strip().lower() in _MISSING:
                    raise DataError(f"{path}:{reader.line_num}: missing value")
            rows.append([cell.strip() for cell in row])
            lines.append(reader.line_num)

    if isinstance(response_column, int) or (
        isinstance(response_column, str) and response_column not in header
        and response_column.lstrip("-").isdigit()
    ):
        idx = int(response_column)
        if not -len(header) <= idx < len(header):
            raise DataError(f"response column index {idx} out of range")
        idx %= len(header)
    elif response_column in header:
        idx = header.index(response_column)
    else:
        raise DataError(f"response column {response_column!r} not in header")
    if len(rows) < 2:
        raise DataError(f"{path}: need at least 2 data rows")

    raw_y = [r[idx] for r in rows]
    levels = _sorted_levels(raw_y)
    if len(levels) < 2:
        raise DataError("response column is constant")
    if task == CLASSIFICATION:
        if len(levels) > 2:
            raise DataError(f"more than two classes in response: {levels[:5]}")
        code = {lvl: float(i) for i, lvl in enumerate(levels)}
        y = np.array([code[v] for v in raw_y])
        class_labels = tuple(levels)
    else:
        parsed = [_parse_float(v) for v in raw_y]
        if any(v is None for v in parsed):
            bad = next(i for i, v in enumerate(parsed) if v is None)
            raise DataError(f"{path}:{lines[bad]}: non-numeric regression response")
        y = np.array(parsed)
        class_labels = ()

    columns = []
    raw = np.empty((len(rows), len(header) - 1), dtype=object)
    j = 0
    for c, col_name in enumerate(header):
        if c == idx:
            continue
        values = [r[c] for r in rows]
        parsed = [_parse_float(v) for v in values]
        if all(v is not None for v in parsed):
            columns.append(Column(col_name, CONTINUOUS))
            raw[:, j] = parsed
        else:
            columns.append(Column(col_name, CATEGORICAL, tuple(_sorted_levels(values))))
            raw[:, j] = values
        j += 1
    return Dataset(
        name=name or path.stem,
        features=raw,
        response=y,
        columns=tuple(columns),
        task=task,
        encoded=False,
        class_labels=class_labels,
    )


def encode(ds: Dataset) -> Dataset:
    """One-hot encode categorical columns, dropping each column's first level.

    Single-level categorical columns carry no information and are removed
    with a :class:`DataWarning`.
    """
    if ds.encoded:
        return ds
    kept = []
    new_cols = []
    for col in ds.columns:
        if col.kind == CATEGORICAL and len(col.levels) < 2:
            warnings.warn(f"dropping single-level column {col.name!r}", DataWarning, stacklevel=2)
            kept.append(False)
            continue
        kept.append(True)
        if col.kind == CONTINUOUS:
            new_cols.append(col)
        else:
            new_cols.extend(
                Column(f"{col.name}[{lvl}]", CATEGORICAL, source=col.name, level=lvl)
                for lvl in col.levels[1:]
            )
    enc = Encoding(ds.columns, tuple(kept))
    x = enc.transform(ds.features)
    return replace(ds, features=x, columns=tuple(new_cols), encoded=True, encoding=enc)


@dataclass(frozen=True)
class ScalingParams:
    mean: np.ndarray
    sd: np.ndarray

    def apply(self, x) -> np.ndarray:
        return (np.asarray(x, dtype=float) - self.mean) / self.sd

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "sd": self.sd.tolist()}

    @classmethod
    def from_dict(cls, doc) -> "ScalingParams":
        return cls(np.asarray(doc["mean"], dtype=float), np.asarray(doc["sd"], dtype=float))


def fit_scaling(x: np.ndarray, columns) -> ScalingParams:
    mean = np.zeros(x.shape[1])
    sd = np.ones(x.shape[1])
    for j, col in enumerate(columns):
        if col.kind != CONTINUOUS or x.shape[0] < 2:
            continue
        s = x[:, j].std(ddof=1)
        if s > 0 and np.isfinite(s):
            mean[j] = x[:, j].mean()
            sd[j] = s
    return ScalingParams(mean, sd)


def standardize(ds: Dataset) -> tuple[Dataset, ScalingParams]:
    """Scale continuous columns to mean 0 and sample sd 1.

    Constant columns and indicator columns are left as they are (recorded
    with mean 0, sd 1 so :meth:`ScalingParams.apply` is a no-op on them).
    """
    if not ds.encoded:
        raise DataError("standardize needs an encoded dataset")
    params = fit_scaling(ds.features, ds.columns)
    return replace(ds, features=params.apply(ds.features)), params


@dataclass(frozen=True)
class FoldAssignment:
    fold_index: np.ndarray
    k: int
    seed: int

    def train_test(self, fold: int) -> tuple[np.ndarray, np.ndarray]:
        test = np.flatnonzero(self.fold_index == fold)
        train = np.flatnonzero(self.fold_index != fold)
        return train, test


def _stratified_order(y: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    parts = []
    for label in (0.0, 1.0):
        idx = np.flatnonzero(y == label)
        parts.append(idx[rng.permutation(len(idx))])
    return np.concatenate(parts)


def kfold(ds: Dataset, k: int, seed: int) -> FoldAssignment:
    """Assign rows to ``k`` folds; stratified by class for classification.

    Rows are shuffled (within class for classification), laid end to end and
    dealt round-robin, so fold sizes and per-fold class counts each differ
    by at most one.
    """
    n = ds.n_rows
    if k < 2:
        raise DataError(f"k must be at least 2, got {k}")
    if k > n:
        raise DataError(f"k={k} exceeds the {n} available rows")
    rng = np.random.default_rng(seed)
    if ds.is_classification:
        minority = int(min((ds.response == 0).sum(), (ds.response == 1).sum()))
        if minority < k:
            warnings.warn(
                f"smallest class has {minority} rows; reducing k from {k} to {max(minority, 2)}",
                DataWarning,
                stacklevel=2,
            )
            k = max(minority, 2)
        order = _stratified_order(ds.response, rng)
    else:
        order = rng.permutation(n)
    folds = np.empty(n, dtype=np.intp)
    folds[order] = np.arange(n) % k
    return FoldAssignment(folds, k, seed)


def _allocate(counts: np.ndarray, total: int) -> np.ndarray:
    """Split ``total`` across groups proportionally (largest remainder)."""
    exact = counts * total / counts.sum()
    out = np.floor(exact).astype(int)
    short = total - out.sum()
    if short > 0:
        order = np.argsort(-(exact - out), kind="stable")
        out[order[:short]] += 1
    return np.minimum(out, counts)


def holdout_indices(
    ds: Dataset,
    *,
    train_fraction: float | None = None,
    train_n: int | None = None,
    seed: int = 0,
) -> tuple[np.ndarray, np.ndarray]:
    """Row indices (sorted) of a stratified train/validation split."""
    n = ds.n_rows
    if (train_fraction is None) == (train_n is None):
        raise DataError("give exactly one of train_fraction or train_n")
    if train_fraction is not None:
        if not 0 < train_fraction < 1:
            raise DataError(f"train_fraction must lie in (0, 1), got {train_fraction}")
        size = int(round(train_fraction * n))
    else:
        size = int(train_n)
        if size >= n:
            raise DataError(f"train_n={size} leaves no validation rows out of {n}")
    if size <= 0 or size >= n:
        raise DataError(f"split leaves an empty side ({size} of {n} rows)")
    if size < 10:
        raise DataError(f"training side would have {size} rows; at least 10 required")

    rng = np.random.default_rng(seed)
    if ds.is_classification:
        groups = [np.flatnonzero(ds.response == c) for c in (0.0, 1.0)]
        groups = [g[rng.permutation(len(g))] for g in groups]
        take = _allocate(np.array([len(g) for g in groups]), size)
        if np.any(take == 0):
            raise DataError("training side would miss a class")
        train = np.concatenate([g[:t] for g, t in zip(groups, take)])
    else:
        train = rng.permutation(n)[:size]
    train = np.sort(train)
    mask = np.ones(n, dtype=bool)
    mask[train] = False
    return train, np.flatnonzero(mask)


def holdout_split(
    ds: Dataset,
    *,
    train_fraction: float | None = None,
    train_n: int | None = None,
    seed: int = 0,
) -> tuple[Dataset, Dataset]:
    """Split into disjoint (train, validation) datasets, stratified by class."""
    train, valid = holdout_indices(ds, train_fraction=train_fraction, train_n=train_n, seed=seed)
    return ds.subset(train), ds.subset(valid)


SYNTHETIC_KINDS = ("two-gaussians", "friedman1")


def friedman1_response(x: np.ndarray) -> np.ndarray:
    x = np.atleast_2d(x)
    return (
        10 * np.sin(np.pi * x[:, 0] * x[:, 1])
        + 20 * (x[:, 2] - 0.5) ** 2
        + 10 * x[:, 3]
        + 5 * x[:, 4]
    )


def make_synthetic(kind: str, n: int, noise: float, seed: int) -> Dataset:
    """Generate a small benchmark dataset.

    ``two-gaussians``: balanced binary classes centred at (-1, -1) and
    (+1, +1) with isotropic Gaussian noise of sd ``noise``.
    ``friedman1``: ten U(0, 1) features, response from Friedman's first
    function plus N(0, noise) error.
    """
    if kind not in SYNTHETIC_KINDS:
        raise DataError(f"unknown synthetic kind {kind!r}; choose from {SYNTHETIC_KINDS}")
    if n < 20:
        raise DataError(f"n must be at least 20, got {n}")
    if noise < 0:
        raise DataError("noise must be non-negative")
    rng = np.random.default_rng(seed)
    if kind == "two-gaussians":
        y = np.zeros(n)
        y[n // 2:] = 1.0
        y = y[rng.permutation(n)]
        centre = np.where(y[:, None] == 1.0, 1.0, -1.0) * np.ones((n, 2))
        x = centre + noise * rng.standard_normal((n, 2))
        cols = tuple(Column(f"x{i + 1}", CONTINUOUS) for i in range(2))
        return Dataset(kind, x, y, cols, CLASSIFICATION, class_labels=("0", "1"))
    x = rng.uniform(0.0, 1.0, size=(n, 10))
    y = friedman1_response(x) + noise * rng.standard_normal(n)
    cols = tuple(Column(f"x{i + 1}", CONTINUOUS) for i in range(10))
    return Dataset(kind, x, y, cols, REGRESSION)


def write_csv(ds: Dataset, path, response_name: str = "y") -> None:
    """Write an encoded dataset as CSV; floats use ``repr`` so they round-trip."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([c.name for c in ds.columns] + [response_name])
        for row, y in zip(ds.features, ds.response):
            label = str(int(y)) if ds.is_classification else repr(float(y))
            w.writerow([repr(float(v)) for v in row] + [label])
