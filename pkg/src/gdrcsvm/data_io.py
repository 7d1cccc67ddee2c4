"""Dataset ingestion, label normalisation, splitting and scaling."""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .errors import DegenerateDataset, DegenerateSplit, LabelError, ParseError, ShapeError

MISSING_TOKENS = frozenset({"", "?", "na", "nan", "null"})


@dataclass(frozen=True)
class Dataset:
    """Labelled feature matrix.  Label +1 is class k=1, label -1 is class k=2."""

    features: np.ndarray
    labels: np.ndarray
    name: str = "dataset"
    dropped_rows: int = 0

    def __post_init__(self):
        X = np.array(self.features, dtype=float)
        y = np.array(self.labels, dtype=float).ravel()
        if X.ndim != 2:
            raise ShapeError(f"features must be 2-D, got shape {X.shape}")
        if X.shape[0] != y.shape[0]:
            raise ShapeError(f"{X.shape[0]} feature rows but {y.shape[0]} labels")
        if y.size and not np.all(np.isin(y, (-1.0, 1.0))):
            raise LabelError("labels must be +1 or -1")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)

    @property
    def n(self) -> int:
        return self.features.shape[1]

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def class_index(self) -> tuple[np.ndarray, np.ndarray]:
        """Row indices of class +1 and class -1, in that order."""
        return np.flatnonzero(self.labels > 0), np.flatnonzero(self.labels < 0)

    @property
    def n_pos(self) -> int:
        return int(np.count_nonzero(self.labels > 0))

    @property
    def n_neg(self) -> int:
        return int(np.count_nonzero(self.labels < 0))

    def class_points(self, label: int) -> np.ndarray:
        return self.features[self.labels == label]

    def subset(self, rows, name: Optional[str] = None) -> "Dataset":
        rows = np.asarray(rows, dtype=int)
        return Dataset(self.features[rows], self.labels[rows], name or self.name)

    def require_both_classes(self) -> None:
        if self.n_pos == 0 or self.n_neg == 0:
            raise DegenerateDataset(f"{self.name}: both classes must be non-empty")

    def summary(self) -> dict:
        return {"name": self.name, "n": self.n, "n_pos": self.n_pos, "n_neg": self.n_neg}


def _same_label(token: str, value) -> bool:
    token = token.strip()
    value = str(value).strip()
    if token == value:
        return True
    try:
        return float(token) == float(value)
    except ValueError:
        return False


def parse_csv(
    path: Union[str, Path],
    label_column: Union[str, int],
    positive_label_value,
    drop_columns: Iterable[Union[str, int]] = (),
    name: Optional[str] = None,
) -> Dataset:
    """Read a headed CSV file; rows with a missing cell are dropped and counted.

    ``label_column`` and ``drop_columns`` accept header names or 0-based
    positions.  Rows whose label equals ``positive_label_value`` become +1,
    every other row -1.  Cells in :data:`MISSING_TOKENS` (case-insensitive)
    count as missing.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ParseError(f"{path}: empty file") from None

        def resolve(col):
            if isinstance(col, int):
                if not 0 <= col < len(header):
                    raise ParseError(f"column index {col} out of range")
                return col
            if col not in header:
                raise ParseError(f"no column named {col!r}")
            return header.index(col)

        label_idx = resolve(label_column)
        skip = {resolve(c) for c in drop_columns} | {label_idx}
        feat_idx = [j for j in range(len(header)) if j not in skip]

        rows, labels, dropped = [], [], 0
        for row_no, row in enumerate(reader, start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ParseError(f"expected {len(header)} fields, got {len(row)}", row=row_no)
            cells = [row[j].strip() for j in feat_idx]
            label = row[label_idx].strip()
            if label.lower() in MISSING_TOKENS or any(c.lower() in MISSING_TOKENS for c in cells):
                dropped += 1
                continue
            values = []
            for j, c in zip(feat_idx, cells):
                try:
                    values.append(float(c))
                except ValueError:
                    raise ParseError(f"non-numeric cell {c!r}", row=row_no, col=j + 1) from None
            rows.append(values)
            labels.append(1.0 if _same_label(label, positive_label_value) else -1.0)

    X = np.array(rows, dtype=float).reshape(len(rows), len(feat_idx))
    ds = Dataset(X, np.array(labels), name or path.stem, dropped_rows=dropped)
    if ds.n_pos == 0 or ds.n_neg == 0:
        raise DegenerateDataset(f"{path}: only one class present")
    return ds


def parse_svmlight(
    path: Union[str, Path],
    n_features: Optional[int] = None,
    positive_label=None,
    name: Optional[str] = None,
) -> Dataset:
    """Read ``<label> idx:val ...`` lines (1-based ascending indices) densely.

    Without ``positive_label`` the labels must be +1/-1.  With it, that value
    maps to +1 and exactly one other value may appear, mapped to -1.
    """
    path = Path(path)
    raw_labels, entries, max_idx = [], [], 0
    with path.open() as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            tokens = line.split()
            raw_labels.append((line_no, tokens[0]))
            last, pairs = 0, []
            for tok in tokens[1:]:
                if tok.startswith("qid:"):
                    continue
                try:
                    idx_s, val_s = tok.split(":", 1)
                    idx, val = int(idx_s), float(val_s)
                except ValueError:
                    raise ParseError(f"malformed feature {tok!r}", row=line_no) from None
                if idx <= last:
                    raise ParseError("feature indices must be ascending and >= 1", row=line_no)
                last = idx
                pairs.append((idx, val))
            max_idx = max(max_idx, last)
            entries.append(pairs)

    n = max_idx if n_features is None else int(n_features)
    if n < max_idx:
        raise ShapeError(f"file uses feature index {max_idx} > n_features={n}")
    X = np.zeros((len(entries), n))
    for i, pairs in enumerate(entries):
        for idx, val in pairs:
            X[i, idx - 1] = val

    y = np.empty(len(raw_labels))
    if positive_label is None:
        for i, (line_no, tok) in enumerate(raw_labels):
            try:
                v = float(tok)
            except ValueError:
                raise LabelError(f"line {line_no}: unknown label {tok!r}") from None
            if v not in (1.0, -1.0):
                raise LabelError(f"line {line_no}: unknown label {tok!r}; pass positive_label")
            y[i] = v
    else:
        others = set()
        for i, (line_no, tok) in enumerate(raw_labels):
            if _same_label(tok, positive_label):
                y[i] = 1.0
            else:
                others.add(tok)
                if len(others) > 1:
                    raise LabelError(f"line {line_no}: more than two label values {sorted(others)}")
                y[i] = -1.0
    return Dataset(X, y, name or path.stem)


def write_svmlight(dataset: Dataset, path: Union[str, Path]) -> None:
    """Write ``dataset`` so that :func:`parse_svmlight` reproduces it exactly."""
    with Path(path).open("w") as fh:
        for x, label in zip(dataset.features, dataset.labels):
            parts = ["+1" if label > 0 else "-1"]
            parts += [f"{j + 1}:{float(v)!r}" for j, v in enumerate(x) if v != 0.0]
            fh.write(" ".join(parts) + "\n")


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float
    seed: int = 0
    stratified: bool = True

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise DegenerateSplit(f"train_fraction must lie in (0, 1), got {self.train_fraction}")


def _train_count(fraction: float, total: int) -> int:
    # round half up; 1e-9 guards against values like 0.2 * 50 = 10.000000000000002
    return int(math.floor(fraction * total + 0.5 + 1e-9))


def make_rng(seed: int) -> np.random.Generator:
    """The package-wide generator: PCG64 seeded with ``seed``."""
    return np.random.Generator(np.random.PCG64(seed))


def split_indices(dataset: Dataset, spec: SplitSpec) -> tuple[np.ndarray, np.ndarray]:
    rng = make_rng(spec.seed)
    groups = list(dataset.class_index) if spec.stratified else [np.arange(len(dataset))]
    train, test = [], []
    for rows in groups:
        k = _train_count(spec.train_fraction, rows.size)
        perm = rng.permutation(rows)
        train.append(perm[:k])
        test.append(perm[k:])
    train_idx = np.sort(np.concatenate(train))
    test_idx = np.sort(np.concatenate(test))
    y = dataset.labels
    for label in (1.0, -1.0):
        if np.count_nonzero(y[train_idx] == label) < 2:
            raise DegenerateSplit(f"fewer than 2 training points of class {label:+.0f}")
        if np.count_nonzero(y[test_idx] == label) < 1:
            raise DegenerateSplit(f"no test points of class {label:+.0f}")
    return train_idx, test_idx


def split(dataset: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset]:
    """Random train/test partition; each class is split separately when stratified."""
    train_idx, test_idx = split_indices(dataset, spec)
    return (
        dataset.subset(train_idx, f"{dataset.name}[train]"),
        dataset.subset(test_idx, f"{dataset.name}[test]"),
    )


class MinMaxScaler:
    """Affine map of every feature onto [0, 1] using training-set extremes."""

    def __init__(self):
        self.low = None
        self.span = None

    def fit(self, dataset: Dataset) -> "MinMaxScaler":
        X = dataset.features
        self.low = X.min(axis=0)
        span = X.max(axis=0) - self.low
        self.span = np.where(span > 0, span, 1.0)
        return self

    def transform(self, dataset: Dataset) -> Dataset:
        if self.low is None:
            raise RuntimeError("MinMaxScaler.transform called before fit")
        X = (dataset.features - self.low) / self.span
        return Dataset(X, dataset.labels, dataset.name, dataset.dropped_rows)


# --- bundled datasets -------------------------------------------------------

def load_wisconsin() -> Dataset:
    """Original Wisconsin breast cancer data; malignant (class 4) is +1.

    The bundled file has 699 rows, 16 of them with a missing
    ``bare_nuclei`` cell, leaving 239 malignant and 444 benign rows.
    """
    ref = resources.files("gdrcsvm.datasets").joinpath("breast-cancer-wisconsin.csv")
    with resources.as_file(ref) as path:
        return parse_csv(path, "class", 4, drop_columns=("id",), name="wisconsin")


def balance_scale_rows() -> list[tuple[str, int, int, int, int]]:
    """All 625 balance-scale configurations in the order of the UCI file.

    Each weight and distance ranges over 1..5; the class is the side with
    the larger torque, ``B`` when balanced.
    """
    rows = []
    for lw, ld, rw, rd in itertools.product(range(1, 6), repeat=4):
        left, right = lw * ld, rw * rd
        cls = "L" if left > right else "R" if right > left else "B"
        rows.append((cls, lw, ld, rw, rd))
    return rows


def load_balance_scale() -> Dataset:
    """Balance-scale data without the balanced class: L is +1, R is -1."""
    rows = [r for r in balance_scale_rows() if r[0] != "B"]
    X = np.array([r[1:] for r in rows], dtype=float)
    y = np.array([1.0 if r[0] == "L" else -1.0 for r in rows])
    return Dataset(X, y, "balance-scale", dropped_rows=49)


def load_ionosphere() -> Dataset:
    """Ionosphere radar returns: 34 features, ``g`` (good, 225 rows) is +1."""
    ref = resources.files("gdrcsvm.datasets").joinpath("ionosphere.csv")
    with resources.as_file(ref) as path:
        return parse_csv(path, "class", "g", name="ionosphere")


BUILTIN_DATASETS = {
    "wisconsin": load_wisconsin,
    "balance-scale": load_balance_scale,
    "ionosphere": load_ionosphere,
}


def load_builtin(name: str) -> Dataset:
    try:
        return BUILTIN_DATASETS[name]()
    except KeyError:
        raise KeyError(f"unknown dataset {name!r}; known: {sorted(BUILTIN_DATASETS)}") from None


def concat(datasets: Sequence[Dataset], name: str) -> Dataset:
    return Dataset(
        np.vstack([d.features for d in datasets]),
        np.concatenate([d.labels for d in datasets]),
        name,
    )
