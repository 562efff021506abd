"""Synthetic isotropic Gaussian blobs with a guaranteed center separation."""

from __future__ import annotations

import numpy as np

from .errors import ConfigError


def make_blobs(
    n: int, d: int, k: int, separation: float = 6.0, seed: int = 0
) -> tuple[np.ndarray, np.ndarray]:
    """n points in d dimensions around k unit-variance Gaussian centers.

    Centers are rejection-sampled from a box until every pairwise distance is
    at least `separation` (in units of the within-cluster sigma = 1). Returns
    (X, labels) with near-equal cluster sizes, rows shuffled.
    """
    if k < 1 or n < k:
        raise ConfigError("need n >= k >= 1")
    rng = np.random.default_rng(seed)
    half = max(separation, 1.0) * max(1.0, k ** (1.0 / d))
    centers = np.empty((k, d))
    placed = 0
    attempts = 0
    while placed < k:
        cand = rng.uniform(-half, half, size=d)
        if placed == 0 or np.min(
            np.sqrt(((centers[:placed] - cand) ** 2).sum(axis=1))
        ) >= separation:
            centers[placed] = cand
            placed += 1
        attempts += 1
        if attempts > 10000 * k:
            raise ConfigError("could not place separated centers; lower separation or k")
    sizes = np.full(k, n // k)
    sizes[: n % k] += 1
    labels = np.repeat(np.arange(k), sizes)
    x = centers[labels] + rng.standard_normal((n, d))
    order = rng.permutation(n)
    return x[order], labels[order]
