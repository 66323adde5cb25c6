"""SGD mit Momentum und gekoppeltem Weight-Decay (nur auf Faltungsgewichten), optional mit festen Masken."""

from __future__ import annotations

import logging
from typing import Iterable, Mapping

import numpy as np

from app.core.tensor import Tensor
from app.errors import DimensionError, NumericalError

logger = logging.getLogger(__name__)


def sgd_step(
    param: np.ndarray,
    grad: np.ndarray,
    velocity: np.ndarray,
    lr: float,
    momentum: float,
    weight_decay: float = 0.0,
    mask: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """
    v ← momentum·v + grad + weight_decay·param;  param ← param − lr·v.

    Mit Maske erhalten maskierte Einträge weder Update noch Geschwindigkeit und bleiben exakt 0.
    """
    if grad.shape != param.shape or velocity.shape != param.shape:
        raise DimensionError(f"SGD: Formen {param.shape}, {grad.shape}, {velocity.shape} passen nicht.")
    step = grad + weight_decay * param if weight_decay else grad
    if mask is not None:
        step = step * mask
    velocity = momentum * velocity + step
    updated = param - lr * velocity
    if mask is not None:
        updated = updated * mask
    return updated.astype(param.dtype), velocity.astype(param.dtype)


class SGD:
    def __init__(
        self,
        named_params: Iterable[tuple[str, Tensor]],
        momentum: float = 0.9,
        weight_decay: float = 0.0,
        decay: Iterable[str] = (),
        masks: Mapping[str, np.ndarray] | None = None,
    ) -> None:
        self.params = list(named_params)
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.decay = set(decay)
        self.masks = dict(masks or {})
        self.velocity = {name: np.zeros_like(t.data) for name, t in self.params}

    def zero_grad(self) -> None:
        for _, tensor in self.params:
            tensor.zero_grad()

    def step(self, lr: float) -> None:
        for name, tensor in self.params:
            if tensor.grad is None:
                continue
            if not np.all(np.isfinite(tensor.grad)):
                raise NumericalError(f"Nicht-endlicher Gradient für Parameter '{name}'.")
            wd = self.weight_decay if name in self.decay else 0.0
            tensor.data, self.velocity[name] = sgd_step(
                tensor.data,
                tensor.grad,
                self.velocity[name],
                lr,
                self.momentum,
                wd,
                self.masks.get(name),
            )
