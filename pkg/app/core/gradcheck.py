"""Vergleich analytischer Gradienten mit zentralen Differenzen (64-Bit-Modus)."""

from __future__ import annotations

from typing import Callable

import numpy as np

from app.core.tensor import Tensor, detect_anomaly, no_grad, precision

# Fester Seed für die Zufallsprojektion nicht-skalarer Ausgaben.
_COTANGENT_SEED = 1234


def _reduce(out: Tensor, cotangent: np.ndarray | None) -> Tensor:
    if out.size == 1:
        return out.sum()
    if cotangent is None:
        raise ValueError("Kotangente fehlt für nicht-skalare Ausgabe.")
    return (out * Tensor(cotangent, dtype=np.float64)).sum()


def numeric_and_analytic(
    f: Callable[[Tensor], Tensor], x: np.ndarray | Tensor, eps: float = 1e-6
) -> tuple[np.ndarray, np.ndarray]:
    """
    Liefert (analytischer Gradient, numerischer Gradient) von f an der Stelle x.

    Skalare Ausgaben werden direkt verwendet. Nicht-skalare Ausgaben werden mit einer
    festen, zufälligen Kotangente gewichtet summiert, damit auch Summen, die konstruktionsbedingt
    konstant sind (z.B. von standardisierten Werten), jeden Pfad prüfen.
    """
    base = np.array(x.data if isinstance(x, Tensor) else x, dtype=np.float64)
    with precision(np.float64), detect_anomaly():
        leaf = Tensor(base.copy(), requires_grad=True)
        out = f(leaf)
        cotangent = None
        if out.size != 1:
            cotangent = np.random.default_rng(_COTANGENT_SEED).standard_normal(out.shape)
        loss = _reduce(out, cotangent)
        loss.backward()
        analytic = np.zeros_like(base) if leaf.grad is None else leaf.grad.astype(np.float64)

        numeric = np.zeros_like(base)
        with no_grad():
            flat = base.reshape(-1)
            num_flat = numeric.reshape(-1)
            for i in range(flat.size):
                shifted = flat.copy()
                shifted[i] = flat[i] + eps
                plus = _reduce(f(Tensor(shifted.reshape(base.shape))), cotangent).item()
                shifted[i] = flat[i] - eps
                minus = _reduce(f(Tensor(shifted.reshape(base.shape))), cotangent).item()
                num_flat[i] = (plus - minus) / (2 * eps)
    return analytic, numeric


def gradcheck(
    f: Callable[[Tensor], Tensor], x: np.ndarray | Tensor, eps: float = 1e-6
) -> float:
    """
    Maximaler relativer Fehler |analytisch − numerisch| / max(|a|, |n|, 1e-8).

    Nicht-endliche Zwischenwerte lösen einen `NumericalError` mit dem Namen des Knotens aus.
    """
    analytic, numeric = numeric_and_analytic(f, x, eps)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    return float(np.max(np.abs(analytic - numeric) / denom)) if analytic.size else 0.0
