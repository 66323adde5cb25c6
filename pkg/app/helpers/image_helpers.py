"""Hilfsfunktionen zur Darstellung von Log-Mel-Merkmalen als PNG."""

from __future__ import annotations

from io import BytesIO

import numpy as np
from PIL import Image

try:  # Pillow >= 9
    _RESAMPLING = Image.Resampling.NEAREST
except AttributeError:  # pragma: no cover - fallback for older Pillow
    _RESAMPLING = Image.NEAREST  # type: ignore[attr-defined]


def _to_grayscale(fmap: np.ndarray) -> np.ndarray:
    """Skaliert linear auf 0–255; eine konstante Karte wird mittelgrau."""
    low, high = float(fmap.min()), float(fmap.max())
    if high - low < 1e-12:
        return np.full(fmap.shape, 128, dtype=np.uint8)
    scaled = (fmap - low) / (high - low) * 255.0
    return np.clip(np.rint(scaled), 0, 255).astype(np.uint8)


def render_feature_png(features: np.ndarray, scale: int = 4) -> bytes:
    """
    Rendert eine (F, T)- oder (1, 1, F, T)-Merkmalskarte.

    Tiefe Frequenzen liegen unten; jedes Bin wird `scale`-fach vergrössert.
    """
    fmap = np.asarray(features, dtype=np.float64)
    fmap = fmap.reshape(fmap.shape[-2], fmap.shape[-1])
    image = Image.fromarray(_to_grayscale(fmap[::-1]))
    if scale > 1:
        image = image.resize((image.width * scale, image.height * scale), _RESAMPLING)
    buffer = BytesIO()
    image.save(buffer, format="PNG", optimize=True)
    return buffer.getvalue()
