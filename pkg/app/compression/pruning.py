"""Einmaliges, unstrukturiertes Magnituden-Pruning mit globalem Schwellwert über alle Faltungen."""

from __future__ import annotations

import logging
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from app.errors import ArgumentError
from app.model.bcresnet import BCResNetASC

logger = logging.getLogger(__name__)


@dataclass
class CompressionState:
    masks: "OrderedDict[str, np.ndarray]" = field(default_factory=OrderedDict)
    scales: dict[str, float] = field(default_factory=dict)
    prune_ratio: float = 0.0
    conv_bits: int = 8
    other_bits: int = 16

    @property
    def total(self) -> int:
        return int(sum(m.size for m in self.masks.values()))

    @property
    def nonzero(self) -> int:
        return int(sum(int(m.sum()) for m in self.masks.values()))


def global_magnitude_masks(
    weights: Mapping[str, np.ndarray], ratio: float
) -> "OrderedDict[str, np.ndarray]":
    """
    0/1-Masken, die den Anteil `ratio` der betragskleinsten Gewichte (über alle Tensoren) entfernen.

    Behalten werden genau round((1 − ratio)·N) Gewichte; bei gleichen Beträgen entscheidet die
    Registry-Reihenfolge (stabile Sortierung).
    """
    if not 0.0 <= ratio < 1.0:
        raise ArgumentError(f"Pruning-Anteil {ratio} liegt nicht in [0, 1).")
    names = list(weights)
    magnitudes = [np.abs(np.asarray(weights[n], dtype=np.float64)).reshape(-1) for n in names]
    flat = np.concatenate(magnitudes) if magnitudes else np.zeros(0)
    keep = int(round((1.0 - ratio) * flat.size))
    mask_flat = np.zeros(flat.size, dtype=np.float32)
    order = np.argsort(flat, kind="stable")
    mask_flat[order[flat.size - keep :]] = 1.0
    masks: OrderedDict[str, np.ndarray] = OrderedDict()
    offset = 0
    for name in names:
        shape = np.shape(weights[name])
        size = int(np.prod(shape))
        masks[name] = mask_flat[offset : offset + size].reshape(shape)
        offset += size
    return masks


def prune(model: BCResNetASC, ratio: float) -> CompressionState:
    """Berechnet die Masken, setzt entfernte Gewichte auf 0 und liefert den Kompressionszustand."""
    params = dict(model.named_parameters())
    weights = OrderedDict((name, params[name].data) for name in model.conv_weight_names())
    masks = global_magnitude_masks(weights, ratio)
    for name, mask in masks.items():
        params[name].data = (params[name].data * mask).astype(params[name].dtype)
    state = CompressionState(masks=masks, prune_ratio=ratio)
    kept = [np.abs(weights[n][masks[n] > 0]) for n in masks]
    threshold = float(min(k.min() for k in kept if k.size)) if any(k.size for k in kept) else 0.0
    logger.info(
        "Pruning %.2f: %d von %d Faltungsgewichten behalten (Schwelle %.3g)",
        ratio,
        state.nonzero,
        state.total,
        threshold,
    )
    return state
