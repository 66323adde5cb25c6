"""Kreuzentropie (auch gegen weiche Ziele) und Logit-Distillation."""

from __future__ import annotations

import numpy as np

from app.core.activations import log_softmax
from app.core.tensor import Tensor, no_grad
from app.errors import ArgumentError, DimensionError


def one_hot(labels: np.ndarray, num_classes: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    out = np.zeros((len(labels), num_classes), dtype=np.float32)
    out[np.arange(len(labels)), labels] = 1.0
    return out


def _as_targets(targets: np.ndarray, logits: Tensor) -> np.ndarray:
    targets = np.asarray(targets)
    if targets.ndim == 1:
        targets = one_hot(targets, logits.shape[1])
    if targets.shape != logits.shape:
        raise DimensionError(f"Ziele {targets.shape} passen nicht zu Logits {logits.shape}.")
    return targets.astype(logits.dtype)


def cross_entropy(logits: Tensor, targets: np.ndarray) -> Tensor:
    """Mittlere Kreuzentropie; `targets` sind Klassenindizes oder Verteilungen (Mixup)."""
    soft = _as_targets(targets, logits)
    return -(log_softmax(logits) * soft).sum(axis=1).mean()


def kd_loss(
    student_logits: Tensor,
    teacher_logits: np.ndarray | Tensor,
    targets: np.ndarray,
    temperature: float,
    weight: float,
) -> Tensor:
    """
    (1 − w)·CE(student, targets) + w·T²·KL(softmax(teacher/T) ‖ softmax(student/T)).

    Lehrer-Logits sind Konstanten. Für w = 0 ist das Ergebnis exakt die Kreuzentropie.
    """
    if temperature <= 0:
        raise ArgumentError(f"Temperatur muss positiv sein (erhalten {temperature}).")
    if not 0.0 <= weight <= 1.0:
        raise ArgumentError(f"KD-Gewicht {weight} liegt nicht in [0, 1].")
    teacher = teacher_logits.data if isinstance(teacher_logits, Tensor) else np.asarray(teacher_logits)
    if teacher.shape != student_logits.shape:
        raise DimensionError(
            f"Lehrer-Logits {teacher.shape} passen nicht zu Schüler-Logits {student_logits.shape}."
        )
    ce = cross_entropy(student_logits, targets)
    if weight == 0.0:
        return ce
    with no_grad():
        teacher_log_p = log_softmax(
            Tensor(teacher, dtype=student_logits.dtype) / temperature
        ).data
    student_log_p = log_softmax(student_logits / temperature)
    kl = (-(student_log_p - teacher_log_p) * np.exp(teacher_log_p)).sum(axis=1).mean()
    distill = kl * (temperature**2)
    if weight == 1.0:
        return distill
    return ce * (1.0 - weight) + distill * weight
