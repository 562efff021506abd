"""External clustering agreement metrics and normalized inertia.

All metrics are contingency-based and invariant to relabeling either side.
Entropy and mutual information use natural logs (the base cancels in the
normalized ratio).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError
from .kmeans import inertia as kmeans_inertia
from .model import ModelState, predict_hard

MAX_ACC_CLASSES = 64


@dataclass
class PartitionPair:
    """Two hard labelings of the same points plus their co-occurrence table."""

    labels_a: np.ndarray
    labels_b: np.ndarray
    contingency: np.ndarray

    @classmethod
    def from_labels(cls, labels_a, labels_b) -> "PartitionPair":
        a = np.asarray(labels_a, dtype=np.int64).ravel()
        b = np.asarray(labels_b, dtype=np.int64).ravel()
        if a.size != b.size:
            raise ShapeError(f"label vectors differ in length: {a.size} vs {b.size}")
        if a.size == 0:
            raise ShapeError("empty partitions")
        _, ai = np.unique(a, return_inverse=True)
        _, bi = np.unique(b, return_inverse=True)
        table = np.zeros((ai.max() + 1, bi.max() + 1), dtype=np.int64)
        np.add.at(table, (ai, bi), 1)
        return cls(a, b, table)

    @property
    def n(self) -> int:
        return self.labels_a.size


def _comb2(x: np.ndarray) -> np.ndarray:
    return x * (x - 1) / 2.0


def _same_partition(p: PartitionPair) -> bool:
    """True when both labelings induce the same set partition."""
    # each contingency row and column must contain a single nonzero block
    t = p.contingency
    return bool(np.all((t > 0).sum(axis=0) <= 1) and np.all((t > 0).sum(axis=1) <= 1))


def rand_index(p: PartitionPair) -> float:
    """Fraction of point pairs on which the two partitions agree."""
    n = p.n
    if n < 2:
        raise ShapeError("rand index needs at least two points")
    total = _comb2(np.array(float(n)))
    same_same = _comb2(p.contingency.astype(np.float64)).sum()
    a = _comb2(p.contingency.sum(axis=1).astype(np.float64)).sum()
    b = _comb2(p.contingency.sum(axis=0).astype(np.float64)).sum()
    # agreements: pairs together in both, plus pairs apart in both
    return float((same_same + (total - a - b + same_same)) / total)


def adjusted_rand(p: PartitionPair) -> float:
    """Chance-corrected pair agreement via the contingency form."""
    n = p.n
    if n < 2:
        raise ShapeError("adjusted rand index needs at least two points")
    index = _comb2(p.contingency.astype(np.float64)).sum()
    a = _comb2(p.contingency.sum(axis=1).astype(np.float64)).sum()
    b = _comb2(p.contingency.sum(axis=0).astype(np.float64)).sum()
    total = _comb2(np.array(float(n)))
    expected = a * b / total
    max_index = 0.5 * (a + b)
    denom = max_index - expected
    if denom == 0.0:
        return 1.0 if _same_partition(p) else 0.0
    return float((index - expected) / denom)


def _entropy(sizes: np.ndarray, n: int) -> float:
    probs = sizes[sizes > 0] / n
    return float(-np.sum(probs * np.log(probs)))


def nmi(p: PartitionPair) -> float:
    """Mutual information normalized by the mean of the two entropies."""
    n = p.n
    t = p.contingency.astype(np.float64)
    a = t.sum(axis=1)
    b = t.sum(axis=0)
    ha = _entropy(a, n)
    hb = _entropy(b, n)
    mean_h = 0.5 * (ha + hb)
    if mean_h == 0.0:
        return 1.0  # both partitions are a single cluster
    nz = t > 0
    pij = t[nz] / n
    outer = (a[:, None] * b[None, :])[nz] / (n * n)
    mi = float(np.sum(pij * np.log(pij / outer)))
    return float(min(1.0, max(0.0, mi / mean_h)))


def hungarian_min_cost(cost: np.ndarray) -> np.ndarray:
    """Min-cost perfect matching on a square matrix (augmenting paths with
    potentials, O(n^3)); returns the column matched to each row."""
    cost = np.asarray(cost, dtype=np.float64)
    n = cost.shape[0]
    if cost.shape != (n, n):
        raise ShapeError("cost matrix must be square")
    inf = np.inf
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    match = np.zeros(n + 1, dtype=np.int64)  # match[j] = row assigned to column j
    way = np.zeros(n + 1, dtype=np.int64)
    for i in range(1, n + 1):
        match[0] = i
        j0 = 0
        minv = np.full(n + 1, inf)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = match[j0]
            delta = inf
            j1 = -1
            for j in range(1, n + 1):
                if used[j]:
                    continue
                cur = cost[i0 - 1, j - 1] - u[i0] - v[j]
                if cur < minv[j]:
                    minv[j] = cur
                    way[j] = j0
                if minv[j] < delta:
                    delta = minv[j]
                    j1 = j
            for j in range(n + 1):
                if used[j]:
                    u[match[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if match[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            match[j0] = match[j1]
            j0 = j1
    out = np.zeros(n, dtype=np.int64)
    for j in range(1, n + 1):
        if match[j] > 0:
            out[match[j] - 1] = j - 1
    return out


def unsup_accuracy(p: PartitionPair) -> float:
    """Best one-to-one label mapping agreement (Hungarian on the negated table)."""
    t = p.contingency
    if max(t.shape) > MAX_ACC_CLASSES:
        raise ShapeError(f"accuracy supports at most {MAX_ACC_CLASSES} classes per side")
    size = max(t.shape)
    padded = np.zeros((size, size), dtype=np.float64)
    padded[: t.shape[0], : t.shape[1]] = t
    cols = hungarian_min_cost(-padded)
    matched = padded[np.arange(size), cols].sum()
    return float(matched / p.n)


def normalized_inertia(model: ModelState, x: np.ndarray, x_t: np.ndarray) -> float:
    """Mean squared distance to the hard-assigned learned centroid.

    Assignments come from the model on the interpretable features; distances
    are measured in the transformed space against the learned centroids.
    """
    labels = predict_hard(model, x)
    return kmeans_inertia(np.atleast_2d(x_t), model.centroids, labels, normalized=True)
