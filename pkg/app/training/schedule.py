"""Lernratenplan: lineares Warmup von 0 auf peak_lr, danach Cosinus-Abfall auf 0."""

from __future__ import annotations

import math

from app.config import TrainConfig


def lr_at(step: int, steps_per_epoch: int, cfg: TrainConfig) -> float:
    """
    Lernrate für den (0-basierten) Optimierungsschritt `step`.

    progress = (step − warmup) / (total − warmup) läuft von 0 bis 1; bei step == total
    ist die Rate exakt 0.
    """
    warmup = cfg.warmup_epochs * steps_per_epoch
    total = cfg.epochs * steps_per_epoch
    if step < warmup:
        return cfg.peak_lr * step / warmup
    if total <= warmup:
        return 0.0
    progress = min((step - warmup) / (total - warmup), 1.0)
    return cfg.peak_lr * 0.5 * (1.0 + math.cos(math.pi * progress))
