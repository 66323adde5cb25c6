"""Elementare differenzierbare Operationen (Arithmetik, Reduktionen, Standardisierung)."""

from __future__ import annotations

from typing import Any, Sequence

import numpy as np

from app.core.tensor import Function, Tensor
from app.errors import DimensionError


def as_tensor(value: Any, like: Tensor | None = None) -> Tensor:
    """Wandelt Skalare/Arrays in konstante Tensoren in der Präzision von `like` um."""
    if isinstance(value, Tensor):
        return value
    dtype = like.dtype if like is not None else None
    return Tensor(value, requires_grad=False, dtype=dtype)


def unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Summiert Broadcast-Achsen heraus, damit der Gradient wieder `shape` hat."""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    axes = tuple(i for i, extent in enumerate(shape) if extent == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def _normalize_axes(axis: Any, ndim: int) -> tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(sorted(a % ndim for a in axis))


def _kept_shape(shape: tuple[int, ...], axes: tuple[int, ...]) -> tuple[int, ...]:
    return tuple(1 if i in axes else extent for i, extent in enumerate(shape))


def _check_broadcast(a: np.ndarray, b: np.ndarray, op: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError as exc:
        raise DimensionError(
            f"{op}: Formen {a.shape} und {b.shape} sind nicht kompatibel."
        ) from exc


class Add(Function):
    def forward(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        _check_broadcast(a, b, "add")
        self.saved["shapes"] = (a.shape, b.shape)
        return a + b

    def backward(self, grad: np.ndarray):
        sa, sb = self.saved["shapes"]
        return unbroadcast(grad, sa), unbroadcast(grad, sb)


class Sub(Function):
    def forward(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        _check_broadcast(a, b, "sub")
        self.saved["shapes"] = (a.shape, b.shape)
        return a - b

    def backward(self, grad: np.ndarray):
        sa, sb = self.saved["shapes"]
        return unbroadcast(grad, sa), unbroadcast(-grad, sb)


class Mul(Function):
    def forward(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        _check_broadcast(a, b, "mul")
        self.saved["a"], self.saved["b"] = a, b
        return a * b

    def backward(self, grad: np.ndarray):
        a, b = self.saved["a"], self.saved["b"]
        return unbroadcast(grad * b, a.shape), unbroadcast(grad * a, b.shape)


class Div(Function):
    def forward(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        _check_broadcast(a, b, "div")
        self.saved["a"], self.saved["b"] = a, b
        return a / b

    def backward(self, grad: np.ndarray):
        a, b = self.saved["a"], self.saved["b"]
        return (
            unbroadcast(grad / b, a.shape),
            unbroadcast(-grad * a / (b * b), b.shape),
        )


class Neg(Function):
    def forward(self, a: np.ndarray) -> np.ndarray:
        return -a

    def backward(self, grad: np.ndarray):
        return (-grad,)


class Power(Function):
    def forward(self, a: np.ndarray, exponent: float) -> np.ndarray:
        self.saved["a"], self.saved["p"] = a, exponent
        return a**exponent

    def backward(self, grad: np.ndarray):
        a, p = self.saved["a"], self.saved["p"]
        return (grad * p * a ** (p - 1),)


class Sum(Function):
    def forward(self, a: np.ndarray, axis: Any = None, keepdims: bool = False) -> np.ndarray:
        axes = _normalize_axes(axis, a.ndim)
        self.saved["shape"], self.saved["axes"], self.saved["keepdims"] = a.shape, axes, keepdims
        return np.asarray(a.sum(axis=axes, keepdims=keepdims))

    def backward(self, grad: np.ndarray):
        shape, axes = self.saved["shape"], self.saved["axes"]
        grad = np.reshape(grad, _kept_shape(shape, axes))
        return (np.broadcast_to(grad, shape).copy(),)


class Mean(Function):
    def forward(self, a: np.ndarray, axis: Any = None, keepdims: bool = False) -> np.ndarray:
        axes = _normalize_axes(axis, a.ndim)
        count = int(np.prod([a.shape[i] for i in axes])) if axes else 1
        self.saved.update(shape=a.shape, axes=axes, keepdims=keepdims, count=count)
        return np.asarray(a.mean(axis=axes, keepdims=keepdims))

    def backward(self, grad: np.ndarray):
        s = self.saved
        grad = np.reshape(grad, _kept_shape(s["shape"], s["axes"]))
        return (np.broadcast_to(grad / s["count"], s["shape"]).copy(),)


class Reshape(Function):
    def forward(self, a: np.ndarray, shape: Sequence[int]) -> np.ndarray:
        self.saved["shape"] = a.shape
        try:
            return a.reshape(shape)
        except ValueError as exc:
            raise DimensionError(f"reshape: {a.shape} -> {tuple(shape)} nicht möglich.") from exc

    def backward(self, grad: np.ndarray):
        return (grad.reshape(self.saved["shape"]),)


class Standardize(Function):
    """
    (x − μ) / sqrt(σ² + ε) mit Populationsvarianz über `axes`.

    Gemeinsamer Kern von FreqIN, Batch-Norm und Subspectral-Norm; der Rückwärtsdurchlauf
    ist analytisch: dx = inv · (g − mean(g) − y · mean(g · y)).
    """

    def forward(self, x: np.ndarray, axes: tuple[int, ...], eps: float) -> np.ndarray:
        mu = x.mean(axis=axes, keepdims=True)
        centered = x - mu
        var = (centered * centered).mean(axis=axes, keepdims=True)
        inv = 1.0 / np.sqrt(var + eps)
        y = centered * inv
        self.saved.update(y=y, inv=inv, axes=axes, mean=mu, var=var)
        return y

    def backward(self, grad: np.ndarray):
        y, inv, axes = self.saved["y"], self.saved["inv"], self.saved["axes"]
        g_mean = grad.mean(axis=axes, keepdims=True)
        gy_mean = (grad * y).mean(axis=axes, keepdims=True)
        return (inv * (grad - g_mean - y * gy_mean),)


def add(a: Tensor, b: Any) -> Tensor:
    return Add.apply(a, as_tensor(b, like=a))


def sub(a: Tensor, b: Any) -> Tensor:
    return Sub.apply(a, as_tensor(b, like=a))


def mul(a: Tensor, b: Any) -> Tensor:
    return Mul.apply(a, as_tensor(b, like=a))


def div(a: Tensor, b: Any) -> Tensor:
    return Div.apply(a, as_tensor(b, like=a))


def neg(a: Tensor) -> Tensor:
    return Neg.apply(a)


def power(a: Tensor, exponent: float) -> Tensor:
    return Power.apply(a, exponent=float(exponent))


def sum(a: Tensor, axis: Any = None, keepdims: bool = False) -> Tensor:  # noqa: A001
    return Sum.apply(a, axis=axis, keepdims=keepdims)


def mean(a: Tensor, axis: Any = None, keepdims: bool = False) -> Tensor:
    return Mean.apply(a, axis=axis, keepdims=keepdims)


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    return Reshape.apply(a, shape=tuple(shape))


def standardize(x: Tensor, axes: Sequence[int], eps: float) -> Tensor:
    """Standardisiert `x` über die angegebenen Achsen (siehe `Standardize`)."""
    if eps <= 0:
        raise ValueError("eps muss positiv sein.")
    return Standardize.apply(x, axes=_normalize_axes(tuple(axes), x.ndim), eps=float(eps))
