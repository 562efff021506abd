"""Mini-batch k-means: centroid warm start and the black-box baseline.

Sculley-style updates: each center keeps an assignment count and moves toward
its batch mean with step size 1/count. Seeding is k-means++ on a subsample
(five batches worth by default) and the best of n_init restarts by full-data
inertia wins.
"""

from __future__ import annotations

import numpy as np

from .config import KmeansConfig
from .errors import ConfigError

CONVERGENCE_TOL = 1e-6
CONVERGENCE_STREAK = 10


def nearest_centroid(x: np.ndarray, z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Hard assignments (lowest index wins ties) and squared distances to them."""
    # ||x - z||^2 expanded; recompute exactly for the winning pair to avoid
    # cancellation artifacts in the returned distances
    d2 = (
        np.einsum("nr,nr->n", x, x)[:, None]
        - 2.0 * (x @ z.T)
        + np.einsum("kr,kr->k", z, z)[None, :]
    )
    labels = np.argmin(d2, axis=1)
    diff = x - z[labels]
    return labels, np.einsum("nr,nr->n", diff, diff)


def inertia(
    x: np.ndarray, z: np.ndarray, assignments: np.ndarray | None = None, normalized: bool = False
) -> float:
    """Sum of squared distances to the assigned centroid (mean if normalized)."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    z = np.atleast_2d(np.asarray(z, dtype=np.float64))
    if assignments is None:
        _, d2 = nearest_centroid(x, z)
        total = float(d2.sum())
    else:
        diff = x - z[np.asarray(assignments, dtype=np.int64)]
        total = float(np.einsum("nr,nr->n", diff, diff).sum())
    return total / x.shape[0] if normalized else total


def kmeanspp_seed(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding: each new center drawn with D^2 weighting."""
    n = x.shape[0]
    centers = np.empty((k, x.shape[1]))
    centers[0] = x[rng.integers(n)]
    d2 = np.einsum("nr,nr->n", x - centers[0], x - centers[0])
    for i in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            idx = rng.integers(n)  # all remaining mass on existing centers
        else:
            idx = rng.choice(n, p=d2 / total)
        centers[i] = x[idx]
        cand = np.einsum("nr,nr->n", x - centers[i], x - centers[i])
        np.minimum(d2, cand, out=d2)
    return centers


def _run_one_init(x: np.ndarray, cfg: KmeansConfig, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    pool = rng.choice(n, size=cfg.init_pool_size(n), replace=False)
    seeds = kmeanspp_seed(x[pool], cfg.k, rng)
    centers = seeds.copy()
    counts = np.zeros(cfg.k)
    calm_streak = 0
    batch_size = min(cfg.batch_size, n)
    for _ in range(cfg.max_epochs):
        batch = x[rng.choice(n, size=batch_size, replace=False)]
        labels, d2 = nearest_centroid(batch, centers)
        old = centers.copy()
        batch_counts = np.bincount(labels, minlength=cfg.k).astype(np.float64)
        sums = np.zeros_like(centers)
        np.add.at(sums, labels, batch)
        new_counts = counts + batch_counts
        seen = new_counts > 0
        centers[seen] = (counts[seen, None] * centers[seen] + sums[seen]) / new_counts[seen, None]
        counts = new_counts
        # a center that has never won a point restarts at the worst-served batch points
        dead = np.flatnonzero(counts == 0)
        if dead.size:
            order = np.argsort(d2)[::-1][: dead.size]
            for c, idx in zip(dead, order):
                centers[c] = batch[idx]
                counts[c] = 1.0
        shift = float(np.sqrt(np.einsum("kr,kr->k", centers - old, centers - old)).max())
        calm_streak = calm_streak + 1 if shift < CONVERGENCE_TOL else 0
        if calm_streak >= CONVERGENCE_STREAK:
            break
    # never return something worse than the seeds we started from
    if inertia(x, seeds) < inertia(x, centers):
        return seeds
    return centers


def mbk_fit(x: np.ndarray, cfg: KmeansConfig) -> tuple[np.ndarray, float]:
    """Best centroids over n_init restarts and their full-data inertia."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.shape[0] < cfg.k:
        raise ConfigError(f"need at least k={cfg.k} points, got {x.shape[0]}")
    master = np.random.default_rng(cfg.seed)
    best_centers = None
    best_inertia = np.inf
    for _ in range(cfg.n_init):
        rng = np.random.default_rng(master.integers(2**63))
        centers = _run_one_init(x, cfg, rng)
        val = inertia(x, centers)
        if val < best_inertia:
            best_inertia = val
            best_centers = centers
    return best_centers, float(best_inertia)
