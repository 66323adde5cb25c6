"""
Augmentierungen im Merkmalsraum: zeitliches Rollen, Mixup und SpecAugment
(je zwei Frequenz- und Zeitmasken, ohne Time-Warping).
"""

from __future__ import annotations

import numpy as np

from app.config import AugmentConfig
from app.core.tensor import Tensor
from app.errors import ArgumentError, ConfigError, DimensionError


def time_roll(x: np.ndarray, shift_frames: int) -> np.ndarray:
    """Zyklische Verschiebung entlang der Zeitachse; was hinten herausfällt, kommt vorne wieder herein."""
    return np.roll(x, int(shift_frames), axis=-1)


def sample_roll(rng: np.random.Generator, max_frames: int) -> int:
    """Gleichverteilt ganzzahlig in [−max_frames, max_frames]."""
    return int(rng.integers(-max_frames, max_frames + 1))


def mixup(
    x1: np.ndarray, x2: np.ndarray, y1: np.ndarray, y2: np.ndarray, lam: float
) -> tuple[np.ndarray, np.ndarray]:
    """Konvexkombination von Merkmalen und Zielverteilungen mit Gewicht lam für (x1, y1)."""
    if not 0.0 <= lam <= 1.0:
        raise ArgumentError(f"lam {lam} liegt nicht in [0, 1].")
    x1, x2 = np.asarray(x1), np.asarray(x2)
    y1, y2 = np.asarray(y1), np.asarray(y2)
    if x1.shape != x2.shape or y1.shape != y2.shape:
        raise DimensionError(
            f"Mixup: Formen {x1.shape}/{x2.shape} bzw. {y1.shape}/{y2.shape} passen nicht."
        )
    if lam == 1.0:
        return x1.copy(), y1.copy()
    if lam == 0.0:
        return x2.copy(), y2.copy()
    x = (lam * x1 + (1.0 - lam) * x2).astype(x1.dtype)
    y = lam * y1 + (1.0 - lam) * y2
    return x, y


def mixup_batch(
    x: np.ndarray, y: np.ndarray, alpha: float, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray, float]:
    """Ein lam ~ Beta(α, α) je Batch; jedes Beispiel wird mit einem Permutationspartner gemischt."""
    lam = float(rng.beta(alpha, alpha))
    partner = rng.permutation(len(x))
    mixed_x, mixed_y = mixup(x, x[partner], y, y[partner], lam)
    return mixed_x, mixed_y, lam


def _check_mask_params(cfg: AugmentConfig, n_freq: int, n_frames: int) -> None:
    if cfg.freq_mask_param > n_freq:
        raise ConfigError(
            f"freq_mask_param={cfg.freq_mask_param} ist grösser als F={n_freq}."
        )
    if cfg.time_mask_param > n_frames:
        raise ConfigError(
            f"time_mask_param={cfg.time_mask_param} ist grösser als T={n_frames}."
        )


def spec_augment_mask(
    shape: tuple[int, int, int, int], cfg: AugmentConfig, rng: np.random.Generator
) -> np.ndarray:
    """
    0/1-Maske (N, 1, F, T): je Beispiel `freq_masks` Bänder und `time_masks` Zeitabschnitte.

    Breite w ~ Uniform{0..param}, Start gleichverteilt in [0, Achsenlänge − w].
    """
    n, _, n_freq, n_frames = shape
    _check_mask_params(cfg, n_freq, n_frames)
    keep = np.ones((n, 1, n_freq, n_frames), dtype=np.float32)
    for i in range(n):
        for _ in range(cfg.freq_masks):
            width = int(rng.integers(0, cfg.freq_mask_param + 1))
            start = int(rng.integers(0, n_freq - width + 1))
            keep[i, :, start : start + width, :] = 0.0
        for _ in range(cfg.time_masks):
            width = int(rng.integers(0, cfg.time_mask_param + 1))
            start = int(rng.integers(0, n_frames - width + 1))
            keep[i, :, :, start : start + width] = 0.0
    return keep


def spec_augment(x: Tensor, cfg: AugmentConfig, rng: np.random.Generator) -> Tensor:
    """Setzt maskierte Positionen auf 0 (im Bereich nach der Eingangsnormalisierung)."""
    if x.ndim != 4:
        raise DimensionError(f"spec_augment erwartet (N, C, F, T), erhalten {x.shape}.")
    return x * spec_augment_mask(x.shape, cfg, rng).astype(x.dtype)


def roll_batch(
    features: np.ndarray, max_frames: int, rngs: list[np.random.Generator]
) -> np.ndarray:
    """Rollt jedes Beispiel mit seinem eigenen Generator (Substream je Beispiel)."""
    if len(rngs) != len(features):
        raise DimensionError("Je Beispiel wird genau ein Zufallsgenerator erwartet.")
    return np.stack([time_roll(f, sample_roll(r, max_frames)) for f, r in zip(features, rngs)])
