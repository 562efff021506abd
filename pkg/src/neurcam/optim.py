"""Adam with bias correction and plateau-driven learning-rate halving."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Container, Mapping

import numpy as np

from .errors import StateError
from .tensor import GradTape


@dataclass
class AdamState:
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def for_params(cls, params: Mapping[str, np.ndarray], lr: float) -> "AdamState":
        state = cls(lr=lr)
        for name, p in params.items():
            state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        return state


def adam_step(
    state: AdamState,
    params: Mapping[str, np.ndarray],
    grads: GradTape,
    frozen: Container[str] = (),
) -> None:
    """One bias-corrected Adam update, in place on the parameter arrays.

    Names in `frozen` are skipped entirely (no moment updates either), which
    is how gate logits stay untouched after their bank hard-switches.
    """
    state.step_count += 1
    t = state.step_count
    bc1 = 1.0 - state.beta1**t
    bc2 = 1.0 - state.beta2**t
    for name, p in params.items():
        if name in frozen:
            continue
        if name not in state.m:
            raise StateError(f"optimizer has no state for parameter '{name}'")
        g = grads[name]
        if g.shape != p.shape:
            raise StateError(f"gradient/parameter shape mismatch for '{name}'")
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * np.square(g)
        p -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)


@dataclass
class PlateauScheduler:
    """Halve the learning rate when the epoch loss stalls for `patience` epochs."""

    patience: int = 100
    factor: float = 0.5
    min_lr: float = 1e-6
    improve_tol: float = 1e-12
    best_loss: float = float("inf")
    epochs_since_improve: int = 0


def plateau_step(sched: PlateauScheduler, adam: AdamState, epoch_loss: float) -> float:
    """Feed one epoch's mean loss; returns the (possibly reduced) lr."""
    if not np.isfinite(epoch_loss):
        raise StateError("plateau scheduler fed a non-finite loss")
    if epoch_loss < sched.best_loss - sched.improve_tol:
        sched.best_loss = epoch_loss
        sched.epochs_since_improve = 0
    else:
        sched.epochs_since_improve += 1
        if sched.epochs_since_improve >= sched.patience:
            adam.lr = max(sched.min_lr, adam.lr * sched.factor)
            sched.epochs_since_improve = 0
    return adam.lr
