"""
Dichte Tensoren mit Rückwärts-Autodiff (reverse mode) auf Basis von NumPy.

Ein `Tensor` hält ein zusammenhängendes NumPy-Array, optional einen Gradienten und
eine Referenz auf die `Function`, die ihn erzeugt hat. Aus diesen Referenzen entsteht
beim Vorwärtsdurchlauf der Rechengraph, den `Tensor.backward` in umgekehrter
topologischer Reihenfolge abläuft.
"""

from __future__ import annotations

import contextlib
import logging
from typing import Any, Iterator, Sequence

import numpy as np

from app.errors import NumericalError

logger = logging.getLogger(__name__)

# Globale Einstellungen des Rechenkerns (Präzision, Graphaufbau, Anomalie-Prüfung).
_STATE: dict[str, Any] = {
    "dtype": np.float32,
    "grad_enabled": True,
    "anomaly": False,
}


def default_dtype() -> type:
    """Aktuelle Gleitkomma-Präzision für neu erzeugte Tensoren."""
    return _STATE["dtype"]


def is_grad_enabled() -> bool:
    return bool(_STATE["grad_enabled"])


@contextlib.contextmanager
def precision(dtype: Any) -> Iterator[None]:
    """
    Schaltet die Präzision für neu erzeugte Tensoren um.

    Trainiert wird in 32 Bit; der 64-Bit-Modus existiert für Gradientenprüfungen.
    """
    dtype = np.dtype(dtype).type
    if dtype not in (np.float32, np.float64):
        raise ValueError(f"Nicht unterstützte Präzision: {dtype}")
    previous = _STATE["dtype"]
    _STATE["dtype"] = dtype
    try:
        yield
    finally:
        _STATE["dtype"] = previous


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Baut innerhalb des Blocks keinen Rechengraphen auf (Evaluation, Lehrermodell)."""
    previous = _STATE["grad_enabled"]
    _STATE["grad_enabled"] = False
    try:
        yield
    finally:
        _STATE["grad_enabled"] = previous


@contextlib.contextmanager
def detect_anomaly() -> Iterator[None]:
    """Prüft jede Operation auf nicht-endliche Werte und benennt den verursachenden Knoten."""
    previous = _STATE["anomaly"]
    _STATE["anomaly"] = True
    try:
        yield
    finally:
        _STATE["anomaly"] = previous


def _as_array(data: Any, dtype: Any = None) -> np.ndarray:
    """C-zusammenhängendes Array; 0-d-Ergebnisse (volle Reduktionen) bleiben 0-d."""
    array = np.asarray(data, dtype=dtype)
    return np.require(array, requirements="C") if array.ndim else array


def _check_finite(array: np.ndarray, node: str, phase: str) -> None:
    if not np.all(np.isfinite(array)):
        raise NumericalError(f"Nicht-endliche Werte in Knoten '{node}' ({phase}).")


class Function:
    """
    Basisklasse aller differenzierbaren Operationen.

    Unterklassen implementieren `forward` auf NumPy-Arrays und `backward`, das zum
    Gradienten der Ausgabe die Gradienten aller Eingaben liefert (`None` für Eingaben
    ohne Gradient). Aktivierungen, die für den Rückwärtsdurchlauf nötig sind, legen sie
    in `self.saved` ab.
    """

    def __init__(self, *inputs: "Tensor") -> None:
        self.inputs = inputs
        self.saved: dict[str, Any] = {}

    @property
    def name(self) -> str:
        return type(self).__name__

    def forward(self, *arrays: np.ndarray, **kwargs: Any) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad: np.ndarray) -> Sequence[np.ndarray | None]:
        raise NotImplementedError

    @classmethod
    def apply(cls, *inputs: "Tensor", **kwargs: Any) -> "Tensor":
        """Führt die Operation aus und hängt sie bei Bedarf an den Rechengraphen."""
        fn = cls(*inputs)
        out = fn.forward(*(t.data for t in inputs), **kwargs)
        if _STATE["anomaly"]:
            _check_finite(out, fn.name, "vorwärts")
        requires_grad = is_grad_enabled() and any(t.requires_grad for t in inputs)
        return Tensor._from_op(out, fn if requires_grad else None, requires_grad)


class Tensor:
    """
    Dichtes N-dimensionales Array mit optionalem Gradienten.

    Blatt-Tensoren (Parameter, Eingaben) werden in der aktuellen Standardpräzision
    angelegt; Ergebnisse von Operationen behalten die Präzision ihrer Berechnung.
    """

    __slots__ = ("data", "grad", "requires_grad", "name", "_creator")

    def __init__(
        self,
        data: Any,
        requires_grad: bool = False,
        name: str | None = None,
        *,
        dtype: Any = None,
    ) -> None:
        self.data = _as_array(data, dtype or default_dtype())
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.name = name
        self._creator: Function | None = None

    @classmethod
    def _from_op(
        cls, data: np.ndarray, creator: Function | None, requires_grad: bool
    ) -> "Tensor":
        out = cls.__new__(cls)
        out.data = _as_array(data)
        out.grad = None
        out.requires_grad = requires_grad
        out.name = None
        out._creator = creator
        return out

    # -- Eigenschaften --

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def creator(self) -> Function | None:
        return self._creator

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item() erwartet genau ein Element, Form {self.shape}.")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False, dtype=self.data.dtype)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        label = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{label})"

    # -- Autodiff --

    def _topological_order(self) -> list["Tensor"]:
        order: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            if node._creator is not None:
                for parent in node._creator.inputs:
                    if parent.requires_grad and id(parent) not in visited:
                        stack.append((parent, False))
        return order

    def backward(self, grad: np.ndarray | None = None) -> None:
        """
        Berechnet die Gradienten aller Blatt-Tensoren mit `requires_grad`.

        Jeder Knoten wird genau einmal besucht; bei Verzweigungen (fan-out) werden die
        Teilgradienten addiert. Bereits vorhandene Blatt-Gradienten werden erhöht.
        """
        if not self.requires_grad:
            raise RuntimeError("Tensor benötigt keinen Gradienten.")
        if grad is None:
            if self.size != 1:
                raise RuntimeError("backward() ohne Gradient nur für Skalare.")
            grad = np.ones_like(self.data)
        grads: dict[int, np.ndarray] = {id(self): np.asarray(grad, dtype=self.dtype)}
        for node in reversed(self._topological_order()):
            node_grad = grads.pop(id(node), None)
            if node_grad is None:
                continue
            fn = node._creator
            if fn is None:
                node.grad = node_grad.copy() if node.grad is None else node.grad + node_grad
                continue
            input_grads = fn.backward(node_grad)
            for parent, parent_grad in zip(fn.inputs, input_grads):
                if parent_grad is None or not parent.requires_grad:
                    continue
                if _STATE["anomaly"]:
                    _check_finite(parent_grad, fn.name, "rückwärts")
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + parent_grad
                else:
                    grads[key] = parent_grad

    # -- Operatoren (Implementierung in app.core.ops) --

    def __add__(self, other: Any) -> "Tensor":
        from app.core import ops

        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other: Any) -> "Tensor":
        from app.core import ops

        return ops.sub(self, other)

    def __rsub__(self, other: Any) -> "Tensor":
        from app.core import ops

        return ops.sub(ops.as_tensor(other, like=self), self)

    def __mul__(self, other: Any) -> "Tensor":
        from app.core import ops

        return ops.mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other: Any) -> "Tensor":
        from app.core import ops

        return ops.div(self, other)

    def __neg__(self) -> "Tensor":
        from app.core import ops

        return ops.neg(self)

    def __pow__(self, exponent: float) -> "Tensor":
        from app.core import ops

        return ops.power(self, exponent)

    def sum(self, axis: Any = None, keepdims: bool = False) -> "Tensor":
        from app.core import ops

        return ops.sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis: Any = None, keepdims: bool = False) -> "Tensor":
        from app.core import ops

        return ops.mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape: int) -> "Tensor":
        from app.core import ops

        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)
