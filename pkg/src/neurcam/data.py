"""Loading, standardization, and batching of the dual data representation.

Training consumes two row-aligned matrices: the interpretable features the
additive model sees, and a transformed representation the clustering distance
is measured in. When no transformed file is given the interpretable matrix is
reused, so the pipeline runs without any external embedding model.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError, ParseError, ShapeError
from .tensor import as_matrix, check_finite

CONST_COLUMN_TOL = 1e-12


@dataclass(frozen=True)
class ScalerStats:
    """Per-column mean and population stddev; constant columns get stddev 1."""

    mean: np.ndarray
    std: np.ndarray

    def apply(self, m: np.ndarray) -> np.ndarray:
        m = as_matrix(m, cols=self.mean.size)
        return (m - self.mean) / self.std

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "ScalerStats":
        return cls(np.asarray(d["mean"], dtype=np.float64), np.asarray(d["std"], dtype=np.float64))

    @classmethod
    def identity(cls, dim: int) -> "ScalerStats":
        return cls(np.zeros(dim), np.ones(dim))


@dataclass
class DualDataset:
    """Row-aligned interpretable (N x D) and transformed (N x R) matrices."""

    x_interp: np.ndarray
    x_transformed: np.ndarray
    feature_names: list[str]
    labels: np.ndarray | None = None

    def __post_init__(self):
        self.x_interp = check_finite(as_matrix(self.x_interp), "interpretable matrix")
        self.x_transformed = check_finite(as_matrix(self.x_transformed), "transformed matrix")
        n = self.x_interp.shape[0]
        if n == 0:
            raise ShapeError("dataset is empty")
        if self.x_transformed.shape[0] != n:
            raise ShapeError(
                f"row mismatch: {n} interpretable rows vs "
                f"{self.x_transformed.shape[0]} transformed rows"
            )
        if len(self.feature_names) != self.x_interp.shape[1]:
            raise ShapeError("feature_names length must equal interpretable column count")
        if len(set(self.feature_names)) != len(self.feature_names):
            raise ShapeError("feature names must be unique")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64).ravel()
            if self.labels.size != n:
                raise ShapeError("labels length must equal the number of rows")

    @property
    def n(self) -> int:
        return self.x_interp.shape[0]

    @property
    def d(self) -> int:
        return self.x_interp.shape[1]

    @property
    def r(self) -> int:
        return self.x_transformed.shape[1]

    def slice(self, idx: np.ndarray) -> "DualDataset":
        return DualDataset(
            self.x_interp[idx],
            self.x_transformed[idx],
            self.feature_names,
            None if self.labels is None else self.labels[idx],
        )


@dataclass
class BatchPlan:
    batch_size: int
    shuffle_seed: int = 0
    epoch: int = 0
    epoch_order: np.ndarray = field(default=None, repr=False)  # type: ignore[assignment]


def load_csv(path: str | Path, has_header: bool = False) -> tuple[np.ndarray, list[str] | None]:
    """Read a numeric CSV into an N x D matrix, row order preserved.

    Ragged rows raise FormatError; a non-numeric cell raises ParseError naming
    its (1-based) row and column.
    """
    path = Path(path)
    rows: list[list[float]] = []
    names: list[str] | None = None
    width: int | None = None
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        for lineno, rec in enumerate(reader, start=1):
            if not rec:
                continue
            if lineno == 1 and has_header:
                names = [c.strip() for c in rec]
                width = len(names)
                continue
            if width is None:
                width = len(rec)
            elif len(rec) != width:
                raise FormatError(
                    f"{path}: row {lineno} has {len(rec)} columns, expected {width}"
                )
            parsed = []
            for col, cell in enumerate(rec, start=1):
                try:
                    parsed.append(float(cell))
                except ValueError:
                    raise ParseError(
                        f"{path}: row {lineno}, column {col}: cannot parse {cell!r} as a number"
                    ) from None
            rows.append(parsed)
    if not rows:
        raise FormatError(f"{path}: no data rows")
    return np.asarray(rows, dtype=np.float64), names


def load_labels(path: str | Path) -> np.ndarray:
    """Read one integer label per line."""
    path = Path(path)
    labels = []
    with path.open() as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                labels.append(int(line))
            except ValueError:
                raise ParseError(f"{path}: line {lineno}: cannot parse {line!r} as an integer") from None
    return np.asarray(labels, dtype=np.int64)


def standardize(m: np.ndarray) -> tuple[np.ndarray, ScalerStats]:
    """Center columns and scale to unit population variance.

    Columns with stddev below 1e-12 are treated as constant: they map to all
    zeros (the stored stddev is 1.0 so applying the scaler stays well-defined).
    """
    m = as_matrix(m)
    mean = m.mean(axis=0)
    std = m.std(axis=0)  # population stddev
    std = np.where(std < CONST_COLUMN_TOL, 1.0, std)
    stats = ScalerStats(mean=mean, std=std)
    return stats.apply(m), stats


def make_epoch_batches(n: int, plan: BatchPlan) -> list[np.ndarray]:
    """Split a seeded permutation of 0..n-1 into consecutive batch slices.

    The permutation is drawn from (shuffle_seed, epoch) so epochs reshuffle
    deterministically; every index appears exactly once per epoch.
    """
    if plan.batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    if plan.epoch_order is not None:
        order = np.asarray(plan.epoch_order)
    else:
        rng = np.random.default_rng([plan.shuffle_seed & 0xFFFFFFFF, plan.epoch])
        order = rng.permutation(n)
    return [order[i : i + plan.batch_size] for i in range(0, n, plan.batch_size)]
