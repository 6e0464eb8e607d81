"""Small dense numerical kernel used by the networks.

Arrays are plain float64 numpy arrays. This module adds the few things the
hand-written backpropagation needs on top of numpy: shape-checked matrix
products, activations paired with their derivatives, a parameter container
holding value and gradient side by side, plain SGD, and a central-difference
gradient checker.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

ACTIVATIONS = ("tanh", "sigmoid", "identity")


class DimensionError(ValueError):
    """Raised when array shapes are incompatible."""


class NonFiniteError(FloatingPointError):
    """Raised when a NaN or Inf shows up in values or gradients."""


def as_matrix(x) -> np.ndarray:
    a = np.asarray(x, dtype=np.float64)
    if a.ndim == 1:
        a = a.reshape(1, -1)
    if a.ndim != 2:
        raise DimensionError(f"expected a 1D or 2D array, got shape {a.shape}")
    return a


def matmul(a, b) -> np.ndarray:
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def sigmoid(x):
    # split by sign so exp never overflows
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def activation(kind: str, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    check_finite(x, "activation input")
    if kind == "tanh":
        return np.tanh(x)
    if kind == "sigmoid":
        return sigmoid(x)
    if kind == "identity":
        return x.copy()
    raise ValueError(f"unknown activation {kind!r}; expected one of {ACTIVATIONS}")


def activation_grad(kind: str, x) -> np.ndarray:
    """Elementwise derivative of ``activation(kind, x)`` with respect to x."""
    x = np.asarray(x, dtype=np.float64)
    check_finite(x, "activation input")
    if kind == "tanh":
        t = np.tanh(x)
        return 1.0 - t * t
    if kind == "sigmoid":
        s = sigmoid(x)
        return s * (1.0 - s)
    if kind == "identity":
        return np.ones_like(x)
    raise ValueError(f"unknown activation {kind!r}; expected one of {ACTIVATIONS}")


def check_finite(x, what: str = "array") -> None:
    if not np.all(np.isfinite(x)):
        raise NonFiniteError(f"non-finite values in {what}")


@dataclass
class Parameter:
    name: str
    value: np.ndarray
    grad: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        self.value = np.asarray(self.value, dtype=np.float64)
        if self.grad is None:
            self.grad = np.zeros_like(self.value)
        if self.grad.shape != self.value.shape:
            raise DimensionError(
                f"{self.name}: grad shape {self.grad.shape} != value shape {self.value.shape}"
            )

    @property
    def shape(self):
        return self.value.shape

    def zero_grad(self) -> None:
        self.grad.fill(0.0)


@dataclass(frozen=True)
class SgdConfig:
    learning_rate: float = 0.001

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")


def sgd_step(params: Iterable[Parameter], cfg: SgdConfig) -> None:
    params = list(params)
    # a NaN/Inf anywhere makes the total non-finite
    total = sum(float(p.grad.sum()) for p in params)
    if not math.isfinite(total):
        bad = [p.name for p in params if not np.all(np.isfinite(p.grad))]
        raise NonFiniteError(f"non-finite gradient in {bad or 'parameters'}")
    for p in params:
        p.value -= cfg.learning_rate * p.grad
        p.zero_grad()


def uniform_init(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def finite_diff_check(
    loss_fn: Callable[[], float],
    params: Sequence[Parameter],
    epsilon: float = 1e-5,
) -> float:
    """Compare the gradients stored in ``params`` with central differences.

    ``loss_fn`` is evaluated with each scalar parameter nudged by +/-epsilon
    in place; the stored ``grad`` arrays are taken as the analytic answer.
    Returns the largest ``|analytic - numeric| / max(1, |analytic|)``.
    """
    worst = 0.0
    for p in params:
        flat = p.value.reshape(-1)
        gflat = p.grad.reshape(-1)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + epsilon
            up = loss_fn()
            flat[k] = orig - epsilon
            down = loss_fn()
            flat[k] = orig
            numeric = (up - down) / (2.0 * epsilon)
            analytic = gflat[k]
            err = abs(analytic - numeric) / max(1.0, abs(analytic))
            worst = max(worst, err)
    return float(worst)
