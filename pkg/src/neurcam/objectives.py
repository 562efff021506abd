"""Training objective: fuzzy clustering cost plus self-supervised KL term.

The clustering cost is measured in the transformed space against learnable
centroids; the KL term pulls the live assignment back toward the one captured
at the end of warmup (evaluated with soft gates at temperature 1). Gradients
are analytic and accumulate on a GradTape via the model's backward pass;
centroid gradients are computed here directly since the loss, not the network,
touches the centroids.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import TrainConfig
from .errors import ShapeError, StateError
from .gates import softmax_rows
from .model import ModelState, backward_batch, forward_batch
from .tensor import GradTape

KL_CLAMP = 1e-12

PHASE_WARMUP = "warmup"
PHASE_ANNEAL = "anneal"


@dataclass(frozen=True)
class LossBreakdown:
    """Summed batch losses; `total = clustering + gamma * kl` by construction."""

    clustering: float
    kl: float
    total: float
    m: float
    gamma: float

    def per_sample(self, n: int) -> "LossBreakdown":
        return LossBreakdown(self.clustering / n, self.kl / n, self.total / n, self.m, self.gamma)


def squared_distances(x_t: np.ndarray, z: np.ndarray) -> np.ndarray:
    """(n, K) squared euclidean distances to each centroid."""
    diff = x_t[:, None, :] - z[None, :, :]
    return np.einsum("nkr,nkr->nk", diff, diff)


def clustering_loss(w: np.ndarray, x_t: np.ndarray, z: np.ndarray, m: float) -> float:
    """sum_n sum_k w_nk^m * ||xt_n - z_k||^2."""
    if w.shape[0] != x_t.shape[0] or w.shape[1] != z.shape[0]:
        raise ShapeError("weights, data, and centroids disagree on n or K")
    return float(np.sum(np.power(w, m) * squared_distances(x_t, z)))


def kl_regularizer(w_star: np.ndarray, w: np.ndarray) -> float:
    """sum_n KL(w*_n || w_n); live weights are clamped at 1e-12 inside the log."""
    if w_star.shape != w.shape:
        raise ShapeError("weight matrices differ in shape")
    w_c = np.maximum(w, KL_CLAMP)
    terms = np.where(w_star > 0.0, w_star * (np.log(np.maximum(w_star, KL_CLAMP)) - np.log(w_c)), 0.0)
    return float(np.sum(terms))


def total_loss(
    model: ModelState,
    snapshot: ModelState | None,
    x: np.ndarray,
    x_t: np.ndarray,
    cfg: TrainConfig,
    phase: str,
) -> tuple[LossBreakdown, GradTape, np.ndarray]:
    """Loss breakdown plus gradients for one batch.

    Returns the tape and the per-cluster fuzzy mass of the batch (used by the
    degeneracy watchdog). In the anneal phase the target weights come from a
    gradient-free forward pass of the warmup snapshot at temperature 1.0.
    """
    if phase not in (PHASE_WARMUP, PHASE_ANNEAL):
        raise ValueError(f"unknown phase {phase!r}")
    if phase == PHASE_ANNEAL and snapshot is None:
        raise StateError("anneal phase requires the warmup snapshot")
    gamma = cfg.effective_gamma()
    drop_clustering = cfg.ablation == "no_cl" and phase == PHASE_ANNEAL

    g, cache = forward_batch(model, x)
    w = softmax_rows(g)
    d2 = squared_distances(np.atleast_2d(x_t), model.centroids)

    tape = GradTape.for_params(model.params())
    tape.zero()
    dg = np.zeros_like(g)

    clust_val = 0.0
    if not drop_clustering:
        wm = np.power(w, cfg.m)
        clust_val = float(np.sum(wm * d2))
        # d/dg through the softmax: u = dL/dw, dg_k = w_k (u_k - sum_j u_j w_j)
        u = cfg.m * np.power(w, cfg.m - 1.0) * d2
        dg += w * (u - np.sum(u * w, axis=1, keepdims=True))
        dz = 2.0 * (wm.sum(axis=0)[:, None] * model.centroids - wm.T @ np.atleast_2d(x_t))
        tape.add("centroids", dz)

    kl_val = 0.0
    if phase == PHASE_ANNEAL and gamma != 0.0:
        g_star, _ = forward_batch(snapshot, x, override_temp=1.0)
        w_star = softmax_rows(g_star)
        kl_val = kl_regularizer(w_star, w)
        # exact gradient of KL(w*||softmax(g)) wrt g
        dg += gamma * (w - w_star)

    backward_batch(model, cache, dg, tape)
    breakdown = LossBreakdown(
        clustering=clust_val,
        kl=kl_val,
        total=clust_val + gamma * kl_val,
        m=cfg.m,
        gamma=gamma,
    )
    return breakdown, tape, w.sum(axis=0)
