"""Elementweise Aktivierungen sowie log-softmax für die Verlustfunktionen."""

from __future__ import annotations

import numpy as np
from scipy.special import expit, log_softmax as _log_softmax

from app.core.tensor import Function, Tensor
from app.errors import ArgumentError


class ReLU(Function):
    def forward(self, x: np.ndarray) -> np.ndarray:
        self.saved["mask"] = x > 0
        return np.where(self.saved["mask"], x, 0).astype(x.dtype, copy=False)

    def backward(self, grad: np.ndarray):
        return (grad * self.saved["mask"],)


class Swish(Function):
    """swish(v) = v · sigmoid(v)"""

    def forward(self, x: np.ndarray) -> np.ndarray:
        s = expit(x)
        self.saved["x"], self.saved["s"] = x, s
        return x * s

    def backward(self, grad: np.ndarray):
        x, s = self.saved["x"], self.saved["s"]
        return (grad * (s + x * s * (1 - s)),)


class Dropout(Function):
    def forward(self, x: np.ndarray, *, keep: np.ndarray, scale: float) -> np.ndarray:
        self.saved["factor"] = keep.astype(x.dtype) * x.dtype.type(scale)
        return x * self.saved["factor"]

    def backward(self, grad: np.ndarray):
        return (grad * self.saved["factor"],)


class LogSoftmax(Function):
    def forward(self, x: np.ndarray) -> np.ndarray:
        out = _log_softmax(x, axis=-1).astype(x.dtype, copy=False)
        self.saved["out"] = out
        return out

    def backward(self, grad: np.ndarray):
        probs = np.exp(self.saved["out"])
        return (grad - probs * grad.sum(axis=-1, keepdims=True),)


def relu(x: Tensor) -> Tensor:
    return ReLU.apply(x)


def swish(x: Tensor) -> Tensor:
    return Swish.apply(x)


def dropout(
    x: Tensor, p: float, training: bool, rng: np.random.Generator | None = None
) -> Tensor:
    """
    Inverted Dropout: Überlebende werden mit 1/(1−p) skaliert.

    Im Evaluationsmodus und für p = 0 ist die Operation die Identität.
    """
    if not 0.0 <= p < 1.0:
        raise ArgumentError(f"Dropout-Rate {p} liegt nicht in [0, 1).")
    if not training or p == 0.0:
        return x
    if rng is None:
        raise ArgumentError("Dropout im Trainingsmodus benötigt einen Zufallsgenerator.")
    keep = rng.random(x.shape) >= p
    return Dropout.apply(x, keep=keep, scale=1.0 / (1.0 - p))


def identity(x: Tensor) -> Tensor:
    return x


def pointwise_activation(
    x: Tensor,
    kind: str,
    *,
    p: float = 0.0,
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> Tensor:
    """Wählt eine elementweise Aktivierung: relu, swish, dropout oder identity."""
    if kind == "relu":
        return relu(x)
    if kind == "swish":
        return swish(x)
    if kind == "dropout":
        return dropout(x, p, training, rng)
    if kind == "identity":
        return identity(x)
    raise ArgumentError(f"Unbekannte Aktivierung '{kind}'.")


def log_softmax(x: Tensor) -> Tensor:
    """Numerisch stabiles log-softmax über die letzte Achse."""
    return LogSoftmax.apply(x)
