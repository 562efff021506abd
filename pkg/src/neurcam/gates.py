"""Sparse feature-selection gates and their temperature annealing.

Each shape function owns a row of selection logits. During training the row is
softened through entmax (a sparse softmax able to emit exact zeros) at
temperature T; as T decays geometrically the distribution sharpens until it is
one-hot, at which point the bank "hard-switches" and selection becomes an
exact coordinate lookup. Pairwise shape functions carry two logit rows with
their own temperature, annealed to completion before the single-feature one.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError

DEFAULT_ALPHA = 1.5
DEFAULT_T_FINAL = 1e-3
ONE_HOT_TOL = 1e-9
BISECT_ITERS = 60
GATE_INIT_SCALE = 0.01


def entmax(logits: np.ndarray, alpha: float = DEFAULT_ALPHA) -> np.ndarray:
    """Row-wise entmax via bisection on the normalization threshold.

    Solves sum_i max(0, (alpha-1)*z_i - tau)^(1/(alpha-1)) = 1 for tau on the
    bracket [max z' - 1, max z'] (z' the scaled, max-shifted logits). 60
    halvings pin tau to ~2^-60, then a final renormalization makes the output
    sum to 1 to the last bit, so saturated rows come out exactly one-hot.
    """
    if alpha <= 1.0:
        raise ValueError("entmax requires alpha > 1")
    z = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    expo = 1.0 / (alpha - 1.0)
    zs = (alpha - 1.0) * (z - z.max(axis=1, keepdims=True))  # row max is now 0
    lo = np.full((z.shape[0], 1), -1.0)
    hi = np.zeros((z.shape[0], 1))
    for _ in range(BISECT_ITERS):
        mid = 0.5 * (lo + hi)
        mass = np.power(np.clip(zs - mid, 0.0, None), expo).sum(axis=1, keepdims=True)
        above = mass >= 1.0
        lo = np.where(above, mid, lo)
        hi = np.where(above, hi, mid)
    p = np.power(np.clip(zs - lo, 0.0, None), expo)
    p /= p.sum(axis=1, keepdims=True)
    if np.asarray(logits).ndim == 1:
        return p[0]
    return p


def entmax_jvp(probs: np.ndarray, alpha: float, upstream: np.ndarray) -> np.ndarray:
    """Jacobian-vector product of entmax at a computed output.

    The Jacobian is diag(s) - s s^T / sum(s) with s_i = p_i^(2-alpha) on the
    support and 0 elsewhere; a one-hot row therefore gets zero gradient.
    """
    p = np.asarray(probs, dtype=np.float64)
    v = np.asarray(upstream, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.where(p > 0.0, np.power(p, 2.0 - alpha), 0.0)
    ssum = s.sum(axis=-1, keepdims=True)
    coef = (s * v).sum(axis=-1, keepdims=True) / ssum
    return s * v - s * coef


def softmax_rows(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _onehot_rows(logits_2d: np.ndarray) -> np.ndarray:
    """Exact one-hot rows at the argmax; lowest index wins ties."""
    out = np.zeros_like(logits_2d)
    out[np.arange(logits_2d.shape[0]), np.argmax(logits_2d, axis=1)] = 1.0
    return out


@dataclass
class GateBank:
    """Selection logits for C single-feature and P pairwise shape functions."""

    single_logits: np.ndarray  # (C, D)
    pair_logits: np.ndarray  # (P, 2, D)
    alpha: float = DEFAULT_ALPHA
    temp_single: float = 1.0
    temp_pair: float = 1.0
    hard_single: bool = False
    hard_pair: bool = False

    def __post_init__(self):
        self.single_logits = np.asarray(self.single_logits, dtype=np.float64)
        self.pair_logits = np.asarray(self.pair_logits, dtype=np.float64)
        if self.single_logits.ndim != 2:
            raise ShapeError("single_logits must be (C, D)")
        if self.pair_logits.ndim != 3 or self.pair_logits.shape[1] != 2:
            raise ShapeError("pair_logits must be (P, 2, D)")
        if self.c + self.p < 1:
            raise ShapeError("need at least one gate (C + P >= 1)")
        if self.c and self.p and self.single_logits.shape[1] != self.pair_logits.shape[2]:
            raise ShapeError("single and pair logits disagree on feature count")
        if self.temp_single <= 0 or self.temp_pair <= 0:
            raise ValueError("temperatures must stay strictly positive")

    def d_or_zero(self) -> int:
        if self.single_logits.size:
            return self.single_logits.shape[-1]
        return self.pair_logits.shape[-1]

    @property
    def c(self) -> int:
        return self.single_logits.shape[0]

    @property
    def p(self) -> int:
        return self.pair_logits.shape[0]

    @property
    def d(self) -> int:
        return self.d_or_zero()

    def single_probs(self) -> np.ndarray:
        """Current (C, D) selection distributions (exact one-hot after switch)."""
        if self.c == 0:
            return np.zeros((0, self.d))
        if self.hard_single:
            return _onehot_rows(self.single_logits)
        return entmax(self.single_logits / self.temp_single, self.alpha)

    def pair_probs(self) -> np.ndarray:
        """Current (P, 2, D) selection distributions."""
        if self.p == 0:
            return np.zeros((0, 2, self.d))
        flat = self.pair_logits.reshape(2 * self.p, self.d)
        if self.hard_pair:
            return _onehot_rows(flat).reshape(self.p, 2, self.d)
        return entmax(flat / self.temp_pair, self.alpha).reshape(self.p, 2, self.d)

    def select_single(self, x: np.ndarray) -> np.ndarray:
        """Gate outputs for a batch: (n, C) mixtures (exact coordinates when hard)."""
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if x.shape[1] != self.d:
            raise ShapeError(f"sample has {x.shape[1]} features, gates expect {self.d}")
        if self.hard_single:
            return x[:, np.argmax(self.single_logits, axis=1)]
        return x @ self.single_probs().T

    def select_pair(self, x: np.ndarray) -> np.ndarray:
        """Pairwise gate outputs for a batch: (n, P, 2)."""
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if x.shape[1] != self.d:
            raise ShapeError(f"sample has {x.shape[1]} features, gates expect {self.d}")
        if self.hard_pair:
            idx = np.argmax(self.pair_logits, axis=2)  # (P, 2)
            return x[:, idx]
        probs = self.pair_probs()  # (P, 2, D)
        return np.einsum("nd,pqd->npq", x, probs)

    def single_selected(self) -> np.ndarray:
        return np.argmax(self.single_logits, axis=1) if self.c else np.zeros(0, dtype=int)

    def pair_selected(self) -> np.ndarray:
        return np.argmax(self.pair_logits, axis=2) if self.p else np.zeros((0, 2), dtype=int)

    def singles_one_hot(self, tol: float = ONE_HOT_TOL) -> bool:
        if self.c == 0 or self.hard_single:
            return True
        return bool(np.all(self.single_probs().max(axis=1) >= 1.0 - tol))

    def pairs_one_hot(self, tol: float = ONE_HOT_TOL) -> bool:
        if self.p == 0 or self.hard_pair:
            return True
        return bool(np.all(self.pair_probs().reshape(2 * self.p, self.d).max(axis=1) >= 1.0 - tol))

    def fully_hard(self) -> bool:
        return (self.c == 0 or self.hard_single) and (self.p == 0 or self.hard_pair)

    def force_hard(self) -> None:
        """Switch both banks to exact argmax selection regardless of tolerance."""
        if self.c:
            self.hard_single = True
        if self.p:
            self.hard_pair = True

    def copy(self) -> "GateBank":
        return GateBank(
            self.single_logits.copy(),
            self.pair_logits.copy(),
            self.alpha,
            self.temp_single,
            self.temp_pair,
            self.hard_single,
            self.hard_pair,
        )


def init_gate_bank(
    c: int, p: int, d: int, rng: np.random.Generator, alpha: float = DEFAULT_ALPHA
) -> GateBank:
    """Near-uniform initial gates so warmup mixes every feature."""
    single = rng.uniform(-GATE_INIT_SCALE, GATE_INIT_SCALE, size=(c, d))
    pair = rng.uniform(-GATE_INIT_SCALE, GATE_INIT_SCALE, size=(p, 2, d))
    return GateBank(single_logits=single, pair_logits=pair, alpha=alpha)


@dataclass
class AnnealSchedule:
    """Geometric temperature decay, pair bank first, then the single bank."""

    warmup_epochs: int
    temper_epochs_single: int = 100
    temper_epochs_pair: int = 100
    t_final: float = DEFAULT_T_FINAL
    epsilon: float | None = None  # explicit decay factor overrides the derived one
    hard_switch_tol: float = ONE_HOT_TOL

    def __post_init__(self):
        if self.epsilon is not None and not (0.0 < self.epsilon < 1.0):
            raise ValueError("epsilon must lie in (0, 1)")
        if self.hard_switch_tol <= 0:
            raise ValueError("hard_switch_tol must be positive")

    def eps_single(self) -> float:
        if self.epsilon is not None:
            return self.epsilon
        return self.t_final ** (1.0 / max(1, self.temper_epochs_single))

    def eps_pair(self) -> float:
        if self.epsilon is not None:
            return self.epsilon
        return self.t_final ** (1.0 / max(1, self.temper_epochs_pair))


def anneal_step(bank: GateBank, sched: AnnealSchedule, epoch: int) -> None:
    """End-of-epoch annealing: decay the active bank unless it is one-hot.

    No-op before the warmup horizon. While pair gates are pending only T2
    decays; once every pair gate is one-hot (within tolerance) the pair bank
    hard-switches and T starts decaying the same way.
    """
    if epoch < sched.warmup_epochs:
        return
    if bank.p and not bank.hard_pair:
        if bank.pairs_one_hot(sched.hard_switch_tol):
            bank.hard_pair = True
        else:
            bank.temp_pair *= sched.eps_pair()
            return
    if bank.c and not bank.hard_single:
        if bank.singles_one_hot(sched.hard_switch_tol):
            bank.hard_single = True
        else:
            bank.temp_single *= sched.eps_single()
