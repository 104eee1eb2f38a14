"""Dataset ingestion: CSV/ARFF parsing, preprocessing, stratified folds.

Preprocessing follows a fixed recipe: rows with missing values are dropped,
categorical columns are one-hot encoded (sorted category order), constant
columns are removed, and the label column maps to 1 for the manifest's
positive label and 0 for the other class. Feature standardization is NOT
part of preprocessing; it happens per fold, fit on the training rows only,
so no test-fold information leaks into the scaler.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np

from .errors import DatasetError, ValidationError

MAX_FEATURES = 20

MISSING_TOKENS = {"", "?"}


@dataclass
class DatasetManifestEntry:
    """One dataset declaration: file location and column roles."""

    name: str
    path: str
    label_column: str
    positive_label: str
    categorical_columns: List[str] = field(default_factory=list)
    openml_task_id: Optional[int] = None

    @classmethod
    def from_dict(cls, d: dict, base_dir: Optional[Path] = None) -> "DatasetManifestEntry":
        try:
            entry = cls(
                name=d["name"],
                path=d["path"],
                label_column=d["label_column"],
                positive_label=str(d["positive_label"]),
                categorical_columns=list(d.get("categorical_columns", [])),
                openml_task_id=d.get("openml_task_id"),
            )
        except KeyError as exc:
            raise DatasetError(f"manifest entry missing field {exc}") from None
        if base_dir is not None and not Path(entry.path).is_absolute():
            entry.path = str(base_dir / entry.path)
        return entry


def load_manifest(path) -> List[DatasetManifestEntry]:
    """Read a JSON manifest; relative dataset paths resolve next to it."""
    path = Path(path)
    if not path.exists():
        raise DatasetError(f"manifest not found: {path}")
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DatasetError(f"manifest {path} is not valid JSON: {exc}") from None
    entries = doc["datasets"] if isinstance(doc, dict) else doc
    return [DatasetManifestEntry.from_dict(d, base_dir=path.parent) for d in entries]


@dataclass
class RawTable:
    """Parsed tabular file: column names and per-cell strings (None = missing).

    nominal_columns lists columns the file format itself declares
    categorical (ARFF nominal attributes); CSV carries no type information.
    """

    columns: List[str]
    rows: List[List[Optional[str]]]
    nominal_columns: Tuple[str, ...] = ()


@dataclass
class Dataset:
    name: str
    features: np.ndarray  # (instances, features) float
    labels: np.ndarray  # (instances,) int 0/1
    feature_names: List[str]

    @property
    def num_features(self) -> int:
        return self.features.shape[1]

    @property
    def num_instances(self) -> int:
        return self.features.shape[0]


@dataclass
class FoldSplit:
    fold_index: int
    train_indices: np.ndarray
    test_indices: np.ndarray


def _parse_csv(path: Path) -> RawTable:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetError(f"{path}: empty file, header row required") from None
        header = [h.strip() for h in header]
        rows = []
        for lineno, cells in enumerate(reader, start=2):
            if not cells:
                continue
            if len(cells) != len(header):
                raise DatasetError(
                    f"{path}:{lineno}: expected {len(header)} cells, got {len(cells)}"
                )
            rows.append(
                [None if c.strip() in MISSING_TOKENS else c.strip() for c in cells]
            )
    if not rows:
        raise DatasetError(f"{path}: no data rows")
    return RawTable(columns=header, rows=rows)


def _split_arff_values(line: str) -> List[str]:
    return next(csv.reader([line], skipinitialspace=True))


def _parse_arff(path: Path) -> RawTable:
    columns: List[str] = []
    nominal: List[str] = []
    rows: List[List[Optional[str]]] = []
    in_data = False
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("%"):
                continue
            low = line.lower()
            if not in_data:
                if low.startswith("@relation"):
                    continue
                if low.startswith("@attribute"):
                    rest = line[len("@attribute") :].strip()
                    if rest.startswith("'") or rest.startswith('"'):
                        quote = rest[0]
                        end = rest.index(quote, 1)
                        name = rest[1:end]
                        type_part = rest[end + 1 :].strip()
                    else:
                        name = rest.split()[0]
                        type_part = rest[len(name) :].strip()
                    columns.append(name)
                    if type_part.startswith("{"):
                        nominal.append(name)
                    continue
                if low.startswith("@data"):
                    if not columns:
                        raise DatasetError(f"{path}: @data before any @attribute")
                    in_data = True
                    continue
                raise DatasetError(f"{path}:{lineno}: unexpected line {line!r}")
            if line.startswith("{"):
                raise DatasetError(f"{path}:{lineno}: sparse ARFF rows not supported")
            cells = [c.strip().strip("'\"") for c in _split_arff_values(line)]
            if len(cells) != len(columns):
                raise DatasetError(
                    f"{path}:{lineno}: expected {len(columns)} cells, got {len(cells)}"
                )
            rows.append([None if c in MISSING_TOKENS else c for c in cells])
    if not in_data:
        raise DatasetError(f"{path}: no @data section")
    if not rows:
        raise DatasetError(f"{path}: no data rows")
    return RawTable(columns=columns, rows=rows, nominal_columns=tuple(nominal))


def load_dataset(path, manifest: DatasetManifestEntry) -> RawTable:
    """Parse a CSV or ARFF file and check the manifest's columns exist."""
    path = Path(path)
    if not path.exists():
        raise DatasetError(f"dataset file not found: {path}")
    if path.suffix.lower() == ".arff":
        table = _parse_arff(path)
    else:
        table = _parse_csv(path)
    known = set(table.columns)
    if manifest.label_column not in known:
        raise DatasetError(
            f"{path}: label column {manifest.label_column!r} not in {table.columns}"
        )
    for col in manifest.categorical_columns:
        if col not in known:
            raise DatasetError(f"{path}: unknown categorical column {col!r}")
    return table


def preprocess(table: RawTable, manifest: DatasetManifestEntry) -> Dataset:
    """Apply the fixed preprocessing recipe; see the module docstring."""
    label_idx = table.columns.index(manifest.label_column)
    complete = [row for row in table.rows if all(c is not None for c in row)]
    if not complete:
        raise DatasetError(f"{manifest.name}: every row has missing values")

    label_values = sorted({row[label_idx] for row in complete})
    if len(label_values) != 2:
        raise DatasetError(
            f"{manifest.name}: label must be binary, found {label_values}"
        )
    if manifest.positive_label not in label_values:
        raise DatasetError(
            f"{manifest.name}: positive label {manifest.positive_label!r} "
            f"not among {label_values}"
        )
    labels = np.array(
        [1 if row[label_idx] == manifest.positive_label else 0 for row in complete],
        dtype=int,
    )

    categorical = set(manifest.categorical_columns) | set(table.nominal_columns)
    col_arrays: List[np.ndarray] = []
    col_names: List[str] = []
    for j, name in enumerate(table.columns):
        if j == label_idx:
            continue
        cells = [row[j] for row in complete]
        if name in categorical:
            for value in sorted(set(cells)):
                col_arrays.append(
                    np.array([1.0 if c == value else 0.0 for c in cells])
                )
                col_names.append(f"{name}={value}")
        else:
            try:
                col_arrays.append(np.array([float(c) for c in cells]))
            except ValueError as exc:
                raise DatasetError(
                    f"{manifest.name}: column {name!r} is not numeric ({exc}); "
                    f"declare it categorical in the manifest"
                ) from None
            col_names.append(name)

    keep = [k for k, arr in enumerate(col_arrays) if np.ptp(arr) > 0.0]
    if not keep:
        raise DatasetError(f"{manifest.name}: all feature columns are constant")
    features = np.column_stack([col_arrays[k] for k in keep])
    names = [col_names[k] for k in keep]
    if features.shape[1] > MAX_FEATURES:
        raise DatasetError(
            f"{manifest.name}: {features.shape[1]} features after preprocessing "
            f"exceeds the {MAX_FEATURES}-feature eligibility limit"
        )
    return Dataset(
        name=manifest.name, features=features, labels=labels, feature_names=names
    )


def make_folds(dataset: Dataset, k: int = 10, seed: int = 0) -> List[FoldSplit]:
    """Stratified k-fold partition with a seeded shuffle.

    Each class's rows are shuffled and dealt into k chunks whose sizes
    differ by at most one, so per-fold class counts stay within one
    instance of the global proportions.
    """
    if k < 2:
        raise ValidationError(f"fold count must be >= 2, got {k}")
    rng = np.random.default_rng(seed)
    per_fold_test: List[List[int]] = [[] for _ in range(k)]
    for cls in (0, 1):
        idx = np.flatnonzero(dataset.labels == cls)
        if idx.size < k:
            raise ValidationError(
                f"{dataset.name}: class {cls} has {idx.size} instances, "
                f"fewer than {k} folds"
            )
        shuffled = rng.permutation(idx)
        for fold_i, chunk in enumerate(np.array_split(shuffled, k)):
            per_fold_test[fold_i].extend(chunk.tolist())

    all_indices = np.arange(dataset.num_instances)
    splits = []
    for fold_i in range(k):
        test = np.array(sorted(per_fold_test[fold_i]), dtype=int)
        mask = np.ones(dataset.num_instances, dtype=bool)
        mask[test] = False
        splits.append(
            FoldSplit(
                fold_index=fold_i,
                train_indices=all_indices[mask],
                test_indices=test,
            )
        )
    return splits


def standardize_fold(
    dataset: Dataset, split: FoldSplit
) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Fold matrices with unit-variance scaling fit on the training rows.

    Means and population standard deviations come from the train indices
    and are applied unchanged to the test indices.
    """
    X_train = dataset.features[split.train_indices]
    X_test = dataset.features[split.test_indices]
    mean = X_train.mean(axis=0)
    std = X_train.std(axis=0)  # population (divide by N)
    std = np.where(std == 0.0, 1.0, std)
    return (
        (X_train - mean) / std,
        dataset.labels[split.train_indices],
        (X_test - mean) / std,
        dataset.labels[split.test_indices],
    )
