"""
Symmetrische 8-Bit-Quantisierung je Tensor und Halbpräzisions-Simulation,
beide mit Straight-Through-Gradient für quantisierungsbewusstes Training.

Die Skala ist max|w| / 127, abgerundet auf 17 Mantissenbits. Damit ist q·scale für
|q| ≤ 127 in float32 exakt: ein i8-Checkpoint liefert beim Laden bitgenau die Werte
des Trainingsgraphen, und die Quantisierung ist idempotent.
"""

from __future__ import annotations

import numpy as np

from app.core.tensor import Function, Tensor
from app.errors import ArgumentError

QMAX = 127
_SCALE_BITS = 17


def _scale_for(absmax: float) -> np.float32:
    """
    absmax / 127 mit auf 17 Bit abgerundeter Mantisse.

    Damit ist q·scale für |q| ≤ 127 in float32 exakt; die Skala liegt höchstens
    2⁻¹⁷ relativ unter absmax / 127.
    """
    mantissa, exponent = np.frexp(np.float64(absmax) / QMAX)
    mantissa = np.floor(mantissa * 2.0**_SCALE_BITS) / 2.0**_SCALE_BITS
    return np.float32(np.ldexp(mantissa, exponent))


def quantize_symmetric(w: np.ndarray, bits: int = 8) -> tuple[np.ndarray, np.float32]:
    """
    Liefert (q als int8, scale). Rundung halb-auf-gerade (np.rint).

    Ein Null-Tensor ergibt q = 0 und die Platzhalter-Skala 1.
    """
    if bits != 8:
        raise ArgumentError(f"Nur 8 Bit werden unterstützt (erhalten {bits}).")
    w64 = np.asarray(w, dtype=np.float64)
    absmax = float(np.max(np.abs(w64))) if w64.size else 0.0
    if absmax == 0.0:
        return np.zeros(w64.shape, dtype=np.int8), np.float32(1.0)
    scale = _scale_for(absmax)
    q = np.clip(np.rint(w64 / np.float64(scale)), -QMAX, QMAX)
    return q.astype(np.int8), scale


def dequantize(q: np.ndarray, scale: float, dtype: type = np.float32) -> np.ndarray:
    return (q.astype(np.float64) * np.float64(scale)).astype(dtype)


class FakeQuant(Function):
    def forward(self, w: np.ndarray, bits: int) -> np.ndarray:
        q, scale = quantize_symmetric(w, bits)
        self.saved["scale"] = scale
        return dequantize(q, scale, w.dtype)

    def backward(self, grad: np.ndarray):
        # Alle Werte liegen im Clamp-Bereich, der STE ist hier die Identität.
        return (grad,)


class FakeHalf(Function):
    def forward(self, x: np.ndarray) -> np.ndarray:
        return x.astype(np.float16).astype(x.dtype)

    def backward(self, grad: np.ndarray):
        return (grad,)


def fake_quant(w: Tensor, bits: int = 8) -> Tensor:
    """Quantisieren und sofort dequantisieren; Gradient fliesst unverändert durch."""
    if bits != 8:
        raise ArgumentError(f"Nur 8 Bit werden unterstützt (erhalten {bits}).")
    return FakeQuant.apply(w, bits=bits)


def fake_half(x: Tensor) -> Tensor:
    """Rundet auf binary16 und zurück (Speicherformat der Nicht-Faltungsparameter)."""
    return FakeHalf.apply(x)
