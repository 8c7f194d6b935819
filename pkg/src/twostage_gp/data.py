"""Dataset ingestion and per-fold standardization.

CSV files are UCI-style: numeric columns only, with the target in the
last column. Standardization statistics are always computed on the
training portion of a fold and applied to both portions; the target
statistics are retained so error metrics can be reported in original
units.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import InputError


@dataclass
class Dataset:
    """Named feature matrix and target vector."""

    name: str
    features: np.ndarray
    targets: np.ndarray

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]


def ingest_csv(path, has_header: bool = False, name: str = None) -> Dataset:
    """Read a numeric CSV; all but the last column are features.

    Any cell that does not parse to a finite number is an error naming
    its row and column.
    """
    path = Path(path)
    if not path.exists():
        raise InputError(f"dataset file not found: {path}")
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        for r, row in enumerate(reader):
            if has_header and r == 0:
                continue
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            parsed = []
            for c, cell in enumerate(row):
                try:
                    v = float(cell)
                except ValueError:
                    raise InputError(
                        f"{path}: cell at row {r + 1}, column {c + 1} is not numeric: {cell!r}"
                    ) from None
                if not np.isfinite(v):
                    raise InputError(
                        f"{path}: cell at row {r + 1}, column {c + 1} is not finite: {cell!r}"
                    )
                parsed.append(v)
            rows.append(parsed)
    if not rows:
        raise InputError(f"{path}: file contains no data rows")
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise InputError(f"{path}: inconsistent column counts {sorted(widths)}")
    if widths.pop() < 2:
        raise InputError(f"{path}: need at least 2 columns (features + target)")
    if len(rows) < 2:
        raise InputError(f"{path}: need at least 2 data rows")
    arr = np.asarray(rows, dtype=float)
    return Dataset(name=name or path.stem, features=arr[:, :-1], targets=arr[:, -1])


def emit_csv(dataset: Dataset, path):
    """Write features plus target column; round-trips exactly."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for x, y in zip(dataset.features, dataset.targets):
            writer.writerow([repr(float(v)) for v in x] + [repr(float(y))])


def read_matrix_csv(path, has_header: bool = False) -> np.ndarray:
    """Read an all-numeric CSV as a plain matrix (no target split)."""
    path = Path(path)
    if not path.exists():
        raise InputError(f"file not found: {path}")
    rows = []
    with open(path, newline="") as fh:
        for r, row in enumerate(csv.reader(fh)):
            if has_header and r == 0:
                continue
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            try:
                rows.append([float(c) for c in row])
            except ValueError:
                raise InputError(f"{path}: non-numeric cell in row {r + 1}") from None
    if not rows:
        raise InputError(f"{path}: file contains no data rows")
    arr = np.asarray(rows, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise InputError(f"{path}: matrix contains non-finite entries")
    return arr


@dataclass
class Standardizer:
    """Column-wise standardization fitted on training rows only.

    Constant feature columns pass through (std clamped to 1). The target
    is standardized too; ``y_std`` de-standardizes reported errors.
    """

    x_mean: np.ndarray = field(default=None)
    x_std: np.ndarray = field(default=None)
    y_mean: float = 0.0
    y_std: float = 1.0

    @classmethod
    def fit(cls, X_train, y_train) -> "Standardizer":
        X_train = np.asarray(X_train, dtype=float)
        y_train = np.asarray(y_train, dtype=float).ravel()
        x_mean = X_train.mean(axis=0)
        x_std = X_train.std(axis=0)
        x_std = np.where(x_std < 1e-12, 1.0, x_std)
        y_std = float(y_train.std())
        if y_std < 1e-12:
            y_std = 1.0
        return cls(x_mean=x_mean, x_std=x_std, y_mean=float(y_train.mean()), y_std=y_std)

    def transform_x(self, X) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.x_mean) / self.x_std

    def transform_y(self, y) -> np.ndarray:
        return (np.asarray(y, dtype=float).ravel() - self.y_mean) / self.y_std

    def inverse_transform_y(self, y) -> np.ndarray:
        return np.asarray(y, dtype=float) * self.y_std + self.y_mean

    def as_dict(self) -> dict:
        return {
            "x_mean": self.x_mean.tolist(),
            "x_std": self.x_std.tolist(),
            "y_mean": self.y_mean,
            "y_std": self.y_std,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Standardizer":
        return cls(
            x_mean=np.asarray(d["x_mean"], dtype=float),
            x_std=np.asarray(d["x_std"], dtype=float),
            y_mean=float(d["y_mean"]),
            y_std=float(d["y_std"]),
        )
