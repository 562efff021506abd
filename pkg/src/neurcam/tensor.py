"""Dense float64 arrays plus the gradient bookkeeping used by manual backprop.

All numerics in this package run on plain 2-D/3-D numpy arrays in double
precision. This module pins that convention and provides the two pieces the
rest of the code builds on: a `GradTape` that accumulates per-parameter
gradients for one training step, and `finite_diff_grad`, the central-difference
oracle every analytic gradient is checked against.
"""

from __future__ import annotations

from typing import Callable, Iterable, Mapping

import numpy as np

from .errors import NumericError, ShapeError

FD_STEP = 1e-5


def as_matrix(data, cols: int | None = None) -> np.ndarray:
    """Coerce to a C-contiguous float64 2-D array, optionally checking cols."""
    m = np.ascontiguousarray(data, dtype=np.float64)
    if m.ndim == 1:
        m = m.reshape(1, -1)
    if m.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got ndim={m.ndim}")
    if cols is not None and m.shape[1] != cols:
        raise ShapeError(f"expected {cols} columns, got {m.shape[1]}")
    return m


def check_finite(a: np.ndarray, what: str = "array") -> np.ndarray:
    if not np.all(np.isfinite(a)):
        raise NumericError(f"{what} contains non-finite entries")
    return a


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product with an explicit inner-dimension check."""
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError("matmul expects 2-D operands")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"inner dimensions differ: {a.shape} x {b.shape}")
    return check_finite(a @ b, "matmul result")


def finite_diff_grad(
    f: Callable[[np.ndarray], float], theta: np.ndarray, h: float = FD_STEP
) -> np.ndarray:
    """Central-difference gradient of a scalar function of a flat vector."""
    if h <= 0:
        raise ValueError("step h must be positive")
    theta = np.asarray(theta, dtype=np.float64).ravel()
    grad = np.empty_like(theta)
    for i in range(theta.size):
        up = theta.copy()
        dn = theta.copy()
        up[i] += h
        dn[i] -= h
        fu, fd = f(up), f(dn)
        if not (np.isfinite(fu) and np.isfinite(fd)):
            raise NumericError(f"objective non-finite at coordinate {i}")
        grad[i] = (fu - fd) / (2.0 * h)
    return grad


def rel_error(g: np.ndarray, g_hat: np.ndarray) -> float:
    """Scale-robust gradient discrepancy: max|g - g_hat| / (1 + max|g|)."""
    g = np.asarray(g, dtype=np.float64).ravel()
    g_hat = np.asarray(g_hat, dtype=np.float64).ravel()
    if g.shape != g_hat.shape:
        raise ShapeError("gradient vectors differ in length")
    denom = 1.0 + float(np.max(np.abs(g))) if g.size else 1.0
    diff = float(np.max(np.abs(g - g_hat))) if g.size else 0.0
    return diff / denom


class GradTape:
    """Per-parameter gradient buffers for one backward pass.

    Buffers are keyed by parameter name and always match the registered
    parameter shape; `zero()` resets every buffer in place at the start of a
    backward pass so accumulation across shape functions is safe.
    """

    def __init__(self, shapes: Mapping[str, tuple[int, ...]]):
        self._grads: dict[str, np.ndarray] = {
            name: np.zeros(shape, dtype=np.float64) for name, shape in shapes.items()
        }

    @classmethod
    def for_params(cls, params: Mapping[str, np.ndarray]) -> "GradTape":
        return cls({name: p.shape for name, p in params.items()})

    def zero(self) -> None:
        for buf in self._grads.values():
            buf.fill(0.0)

    def add(self, name: str, grad: np.ndarray) -> None:
        buf = self._grads[name]
        grad = np.asarray(grad, dtype=np.float64)
        if grad.shape != buf.shape:
            raise ShapeError(
                f"gradient for '{name}' has shape {grad.shape}, expected {buf.shape}"
            )
        buf += grad

    def __getitem__(self, name: str) -> np.ndarray:
        return self._grads[name]

    def __contains__(self, name: str) -> bool:
        return name in self._grads

    def names(self) -> Iterable[str]:
        return self._grads.keys()

    def as_dict(self) -> dict[str, np.ndarray]:
        return dict(self._grads)


def flatten_params(params: Mapping[str, np.ndarray], order: Iterable[str]) -> np.ndarray:
    """Concatenate parameter arrays into one flat vector (fixed name order)."""
    return np.concatenate([np.asarray(params[name], dtype=np.float64).ravel() for name in order])


def unflatten_params(
    flat: np.ndarray, templates: Mapping[str, np.ndarray], order: Iterable[str]
) -> dict[str, np.ndarray]:
    """Inverse of `flatten_params` given template shapes."""
    out: dict[str, np.ndarray] = {}
    pos = 0
    for name in order:
        shape = templates[name].shape
        size = int(np.prod(shape)) if shape else 1
        out[name] = flat[pos : pos + size].reshape(shape).copy()
        pos += size
    if pos != flat.size:
        raise ShapeError(f"flat vector length {flat.size} does not match templates ({pos})")
    return out
