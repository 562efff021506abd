"""Gated neural basis model: forward pass and manual backward pass.

All shape functions share one small MLP backbone (one per interaction order)
that maps a gated input to B basis values; per-shape-function reconstruction
weights combine the basis into each cluster's logit contribution. Cluster
logits are the sum of contributions plus a per-cluster intercept, and fuzzy
assignments are their softmax.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import TrainConfig
from .errors import ConfigError, ShapeError
from .gates import GateBank, entmax, entmax_jvp, init_gate_bank, softmax_rows
from .tensor import GradTape


@dataclass
class Backbone:
    """Two-hidden-layer ReLU MLP: in_dim -> hidden -> hidden -> basis."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    w3: np.ndarray
    b3: np.ndarray

    @property
    def in_dim(self) -> int:
        return self.w1.shape[0]

    @property
    def basis_dim(self) -> int:
        return self.w3.shape[1]

    def params(self, prefix: str) -> dict[str, np.ndarray]:
        return {
            f"{prefix}.w1": self.w1,
            f"{prefix}.b1": self.b1,
            f"{prefix}.w2": self.w2,
            f"{prefix}.b2": self.b2,
            f"{prefix}.w3": self.w3,
            f"{prefix}.b3": self.b3,
        }

    def copy(self) -> "Backbone":
        return Backbone(*(a.copy() for a in (self.w1, self.b1, self.w2, self.b2, self.w3, self.b3)))


def init_backbone(in_dim: int, hidden: int, basis: int, rng: np.random.Generator) -> Backbone:
    """He fan-in init for the ReLU layers, zero biases."""

    def he(fan_in, fan_out):
        return rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, fan_out))

    return Backbone(
        w1=he(in_dim, hidden),
        b1=np.zeros(hidden),
        w2=he(hidden, hidden),
        b2=np.zeros(hidden),
        w3=he(hidden, basis),
        b3=np.zeros(basis),
    )


def backbone_forward(bb: Backbone, x: np.ndarray):
    """Forward over a (rows, in_dim) batch; returns output and the cache."""
    z1 = x @ bb.w1 + bb.b1
    a1 = np.maximum(z1, 0.0)
    z2 = a1 @ bb.w2 + bb.b2
    a2 = np.maximum(z2, 0.0)
    out = a2 @ bb.w3 + bb.b3
    return out, (x, z1, a1, z2, a2)


def backbone_backward(bb: Backbone, cache, dout: np.ndarray, prefix: str, tape: GradTape):
    """Accumulate backbone gradients on the tape; returns d(input)."""
    x, z1, a1, z2, a2 = cache
    tape.add(f"{prefix}.w3", a2.T @ dout)
    tape.add(f"{prefix}.b3", dout.sum(axis=0))
    dz2 = (dout @ bb.w3.T) * (z2 > 0.0)
    tape.add(f"{prefix}.w2", a1.T @ dz2)
    tape.add(f"{prefix}.b2", dz2.sum(axis=0))
    dz1 = (dz2 @ bb.w2.T) * (z1 > 0.0)
    tape.add(f"{prefix}.w1", x.T @ dz1)
    tape.add(f"{prefix}.b1", dz1.sum(axis=0))
    return dz1 @ bb.w1.T


@dataclass
class ModelState:
    """Every learnable quantity of one clustering model."""

    gates: GateBank
    backbone_single: Backbone | None
    backbone_pair: Backbone | None
    lambda_single: np.ndarray  # (C, K, B)
    lambda_pair: np.ndarray  # (P, K, B)
    bias: np.ndarray  # (K,) global per-cluster intercept
    centroids: np.ndarray  # (K, R), lives in the transformed space

    def __post_init__(self):
        if self.k < 2:
            raise ShapeError("need at least two clusters")

    @property
    def k(self) -> int:
        return self.bias.shape[0]

    @property
    def d(self) -> int:
        return self.gates.d

    @property
    def r(self) -> int:
        return self.centroids.shape[1]

    @property
    def c(self) -> int:
        return self.gates.c

    @property
    def p(self) -> int:
        return self.gates.p

    def params(self) -> dict[str, np.ndarray]:
        """Live parameter arrays keyed by name (views, not copies)."""
        out: dict[str, np.ndarray] = {}
        if self.c:
            out["gates.single"] = self.gates.single_logits
            out["lambda_single"] = self.lambda_single
            out.update(self.backbone_single.params("bb1"))
        if self.p:
            out["gates.pair"] = self.gates.pair_logits
            out["lambda_pair"] = self.lambda_pair
            out.update(self.backbone_pair.params("bb2"))
        out["bias"] = self.bias
        out["centroids"] = self.centroids
        return out

    def copy(self) -> "ModelState":
        return ModelState(
            gates=self.gates.copy(),
            backbone_single=self.backbone_single.copy() if self.backbone_single else None,
            backbone_pair=self.backbone_pair.copy() if self.backbone_pair else None,
            lambda_single=self.lambda_single.copy(),
            lambda_pair=self.lambda_pair.copy(),
            bias=self.bias.copy(),
            centroids=self.centroids.copy(),
        )


def init_model(cfg: TrainConfig, seed: int, kmeans_centroids: np.ndarray) -> ModelState:
    """Seeded init; centroids are copied from the k-means warm start."""
    cfg.validate()
    if cfg.d is None:
        raise ConfigError("cfg.d (feature count) must be set before init_model")
    z = np.asarray(kmeans_centroids, dtype=np.float64)
    if z.ndim != 2 or z.shape[0] != cfg.k:
        raise ConfigError(f"centroids must be ({cfg.k}, R), got {z.shape}")
    rng = np.random.default_rng(seed)
    gates = init_gate_bank(cfg.c, cfg.p, d=cfg.d, rng=rng, alpha=cfg.alpha_entmax)
    bb1 = init_backbone(1, cfg.hidden_dim, cfg.b, rng) if cfg.c else None
    bb2 = init_backbone(2, cfg.hidden_dim, cfg.b, rng) if cfg.p else None
    lam_s = rng.normal(0.0, np.sqrt(2.0 / cfg.b), size=(cfg.c, cfg.k, cfg.b))
    lam_p = rng.normal(0.0, np.sqrt(2.0 / cfg.b), size=(cfg.p, cfg.k, cfg.b))
    return ModelState(
        gates=gates,
        backbone_single=bb1,
        backbone_pair=bb2,
        lambda_single=lam_s,
        lambda_pair=lam_p,
        bias=np.zeros(cfg.k),
        centroids=z.copy(),
    )


@dataclass
class ForwardCache:
    x: np.ndarray
    probs_single: np.ndarray | None  # (C, D) mixtures, None when hard
    s_single: np.ndarray | None  # (n, C)
    bb1_cache: tuple | None
    h_single: np.ndarray | None  # (n, C, B)
    probs_pair: np.ndarray | None  # (P, 2, D), None when hard
    s_pair: np.ndarray | None  # (n, P, 2)
    bb2_cache: tuple | None
    h_pair: np.ndarray | None  # (n, P, B)
    temp_single: float
    temp_pair: float
    gates_soft_single: bool
    gates_soft_pair: bool


def forward_batch(
    model: ModelState, x: np.ndarray, override_temp: float | None = None
) -> tuple[np.ndarray, ForwardCache]:
    """Cluster logits for a batch, with the cache needed to backprop.

    `override_temp` forces soft gates at the given temperature regardless of
    the bank's annealing state; the self-supervision target pass uses 1.0.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.shape[1] != model.d:
        raise ShapeError(f"batch has {x.shape[1]} features, model expects {model.d}")
    n = x.shape[0]
    bank = model.gates
    g = np.broadcast_to(model.bias, (n, model.k)).copy()

    probs_s = s_single = bb1_cache = h_single = None
    soft_single = False
    if model.c:
        if override_temp is not None:
            probs_s = entmax(bank.single_logits / override_temp, bank.alpha)
            s_single = x @ probs_s.T
            soft_single = True
        elif bank.hard_single:
            s_single = bank.select_single(x)
        else:
            probs_s = bank.single_probs()
            s_single = x @ probs_s.T
            soft_single = True
        flat, bb1_cache = backbone_forward(model.backbone_single, s_single.reshape(-1, 1))
        h_single = flat.reshape(n, model.c, -1)
        g += np.einsum("ncb,ckb->nk", h_single, model.lambda_single)

    probs_p = s_pair = bb2_cache = h_pair = None
    soft_pair = False
    if model.p:
        if override_temp is not None:
            flat_logits = bank.pair_logits.reshape(2 * model.p, model.d)
            probs_p = entmax(flat_logits / override_temp, bank.alpha).reshape(model.p, 2, model.d)
            s_pair = np.einsum("nd,pqd->npq", x, probs_p)
            soft_pair = True
        elif bank.hard_pair:
            s_pair = bank.select_pair(x)
        else:
            probs_p = bank.pair_probs()
            s_pair = np.einsum("nd,pqd->npq", x, probs_p)
            soft_pair = True
        flat, bb2_cache = backbone_forward(model.backbone_pair, s_pair.reshape(-1, 2))
        h_pair = flat.reshape(n, model.p, -1)
        g += np.einsum("npb,pkb->nk", h_pair, model.lambda_pair)

    cache = ForwardCache(
        x=x,
        probs_single=probs_s,
        s_single=s_single,
        bb1_cache=bb1_cache,
        h_single=h_single,
        probs_pair=probs_p,
        s_pair=s_pair,
        bb2_cache=bb2_cache,
        h_pair=h_pair,
        temp_single=override_temp if override_temp is not None else bank.temp_single,
        temp_pair=override_temp if override_temp is not None else bank.temp_pair,
        gates_soft_single=soft_single,
        gates_soft_pair=soft_pair,
    )
    return g, cache


def backward_batch(
    model: ModelState,
    cache: ForwardCache,
    dg: np.ndarray,
    tape: GradTape,
    update_gates: bool = True,
) -> None:
    """Accumulate d(loss)/d(params) onto the tape given d(loss)/d(logits).

    Centroid gradients never flow through the network (the loss touches them
    directly); they are the objective module's responsibility.
    """
    tape.add("bias", dg.sum(axis=0))
    n = cache.x.shape[0]
    if model.c:
        tape.add("lambda_single", np.einsum("nk,ncb->ckb", dg, cache.h_single))
        dh = np.einsum("nk,ckb->ncb", dg, model.lambda_single)
        ds_flat = backbone_backward(
            model.backbone_single, cache.bb1_cache, dh.reshape(n * model.c, -1), "bb1", tape
        )
        if cache.gates_soft_single and update_gates and not model.gates.hard_single:
            ds = ds_flat.reshape(n, model.c)
            dprobs = ds.T @ cache.x  # (C, D)
            dlogits = entmax_jvp(cache.probs_single, model.gates.alpha, dprobs)
            tape.add("gates.single", dlogits / cache.temp_single)
    if model.p:
        tape.add("lambda_pair", np.einsum("nk,npb->pkb", dg, cache.h_pair))
        dh = np.einsum("nk,pkb->npb", dg, model.lambda_pair)
        ds_flat = backbone_backward(
            model.backbone_pair, cache.bb2_cache, dh.reshape(n * model.p, -1), "bb2", tape
        )
        if cache.gates_soft_pair and update_gates and not model.gates.hard_pair:
            ds = ds_flat.reshape(n, model.p, 2)
            dprobs = np.einsum("npq,nd->pqd", ds, cache.x)
            flat = entmax_jvp(
                cache.probs_pair.reshape(2 * model.p, model.d),
                model.gates.alpha,
                dprobs.reshape(2 * model.p, model.d),
            )
            tape.add("gates.pair", flat.reshape(model.p, 2, model.d) / cache.temp_pair)


def cluster_logits(model: ModelState, x: np.ndarray) -> np.ndarray:
    """Logits for one sample or a batch (no cache)."""
    g, _ = forward_batch(model, x)
    return g[0] if np.asarray(x).ndim == 1 else g


def assign(model: ModelState, x: np.ndarray) -> np.ndarray:
    """Fuzzy cluster weights: softmax of the logits, max-shifted for stability."""
    g = cluster_logits(model, x)
    return softmax_rows(g)


def predict_hard(model: ModelState, x: np.ndarray):
    """Most likely cluster per sample; lowest index wins ties."""
    g = cluster_logits(model, x)
    return int(np.argmax(g)) if g.ndim == 1 else np.argmax(g, axis=1)


def shape_contributions(model: ModelState, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-shape-function logit contributions: (n, C, K) and (n, P, K)."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    _, cache = forward_batch(model, x)
    n = x.shape[0]
    single = (
        np.einsum("ncb,ckb->nck", cache.h_single, model.lambda_single)
        if model.c
        else np.zeros((n, 0, model.k))
    )
    pair = (
        np.einsum("npb,pkb->npk", cache.h_pair, model.lambda_pair)
        if model.p
        else np.zeros((n, 0, model.k))
    )
    return single, pair
