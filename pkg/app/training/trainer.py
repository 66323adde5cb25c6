"""
Trainingsschleife (SGD, Warmup + Cosinus, Roll/Mixup/SpecAugment, optional KD) und
Auswertung je Gerät.

Zufall stammt ausschliesslich aus dem übergebenen Seed: je Epoche ein Batch-Generator
aus (seed, epoch) und je Beispiel ein Generator aus (seed, epoch, index).
"""

from __future__ import annotations

import json
import logging
import math
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np

from app.config import DEVICES, UNSEEN_DEVICES, AugmentConfig, TrainConfig
from app.core.tensor import Tensor, no_grad
from app.data.dataset import SceneDataset
from app.errors import ArgumentError, NumericalError
from app.model.bcresnet import BCResNetASC
from app.training.augment import mixup_batch, roll_batch, spec_augment
from app.training.losses import cross_entropy, kd_loss, one_hot
from app.training.optim import SGD
from app.training.schedule import lr_at

logger = logging.getLogger(__name__)

REPORT_COLUMNS = (*DEVICES, "Overall")


@dataclass
class EvalReport:
    per_device: "OrderedDict[str, float | None]"
    overall: float
    counts: dict[str, int] = field(default_factory=dict)

    def row(self) -> list[float | None]:
        return [*self.per_device.values(), self.overall]

    def mean_over(self, devices: tuple[str, ...]) -> float | None:
        values = [self.per_device[d] for d in devices if self.per_device.get(d) is not None]
        return float(np.mean(values)) if values else None

    @property
    def unseen(self) -> float | None:
        return self.mean_over(UNSEEN_DEVICES)

    def to_dict(self) -> dict[str, Any]:
        return {"accuracy": dict(self.per_device), "overall": self.overall, "counts": self.counts}


def predict(model: BCResNetASC, features: np.ndarray, batch_size: int = 128) -> np.ndarray:
    """Logits im Evaluationsmodus; der vorherige Modus wird wiederhergestellt."""
    was_training = model.training
    model.eval()
    outputs = []
    try:
        with no_grad():
            for start in range(0, len(features), batch_size):
                outputs.append(model(Tensor(features[start : start + batch_size])).data)
    finally:
        model.train(was_training)
    return np.concatenate(outputs, axis=0)


def evaluate(model: BCResNetASC, dataset: SceneDataset, batch_size: int = 128) -> EvalReport:
    """Top-1-Genauigkeit (in Prozent) je Gerät und über alle Beispiele."""
    if len(dataset) == 0:
        raise ArgumentError("Auswertung auf leerem Datensatz ist nicht möglich.")
    predictions = predict(model, dataset.features(), batch_size).argmax(axis=1)
    correct = predictions == dataset.labels()
    devices = np.array(dataset.devices())
    per_device: OrderedDict[str, float | None] = OrderedDict()
    counts: dict[str, int] = {}
    for device in DEVICES:
        selected = devices == device
        counts[device] = int(selected.sum())
        per_device[device] = 100.0 * float(correct[selected].mean()) if counts[device] else None
    return EvalReport(per_device, 100.0 * float(correct.mean()), counts)


@dataclass
class TrainResult:
    final_state: "OrderedDict[str, np.ndarray]"
    best_state: "OrderedDict[str, np.ndarray]"
    metrics: list[dict[str, Any]] = field(default_factory=list)
    best_epoch: int | None = None
    best_report: EvalReport | None = None
    final_report: EvalReport | None = None


def metrics_jsonl(metrics: list[dict[str, Any]]) -> str:
    return "".join(json.dumps(m, sort_keys=True) + "\n" for m in metrics)


def train(
    model: BCResNetASC,
    dataset: SceneDataset,
    cfg: TrainConfig,
    aug: AugmentConfig,
    seed: int,
    *,
    teacher: BCResNetASC | None = None,
    masks: Mapping[str, np.ndarray] | None = None,
) -> TrainResult:
    """
    Trainiert `model` in place über den vollständigen Plan.

    Nach jeder Epoche wird der Test-Split je Gerät ausgewertet; zurückgegeben werden
    der finale Zustand und der Zustand mit der besten Test-Genauigkeit.
    """
    train_set = dataset.split("train")
    test_set = dataset.split("test")
    if len(train_set) == 0:
        raise ArgumentError("Trainings-Split ist leer.")
    if cfg.epochs == 0:
        state = model.state_dict()
        return TrainResult(state, state)

    features = train_set.features()
    labels = train_set.labels()
    n = len(train_set)
    steps_per_epoch = math.ceil(n / cfg.batch_size)
    optimizer = SGD(
        model.named_parameters(),
        momentum=cfg.momentum,
        weight_decay=cfg.weight_decay,
        decay=model.conv_weight_names(),
        masks=masks,
    )
    if teacher is not None:
        teacher.eval()

    result = TrainResult(model.state_dict(), model.state_dict())
    best_overall = -1.0
    step = 0
    lr = 0.0
    for epoch in range(cfg.epochs):
        model.train()
        batch_rng = np.random.default_rng([seed, epoch])
        order = batch_rng.permutation(n)
        losses = []
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            x = features[idx]
            if aug.roll_enabled:
                rngs = [np.random.default_rng([seed, epoch, int(i)]) for i in idx]
                x = roll_batch(x, aug.roll_max_frames, rngs)
            y = one_hot(labels[idx], dataset.num_classes)
            if aug.mixup_enabled and len(idx) > 1:
                x, y, _ = mixup_batch(x, y, aug.mixup_alpha, batch_rng)

            augment = None
            if aug.specaugment_enabled:
                augment = lambda h, r=batch_rng: spec_augment(h, aug, r)  # noqa: E731
            lr = lr_at(step, steps_per_epoch, cfg)
            logits = model(Tensor(x), rng=batch_rng, augment=augment)
            if teacher is not None:
                with no_grad():
                    teacher_logits = teacher(Tensor(x)).data
                loss = kd_loss(logits, teacher_logits, y, cfg.kd_temperature, cfg.kd_weight)
            else:
                loss = cross_entropy(logits, y)
            value = loss.item()
            if not math.isfinite(value):
                raise NumericalError(f"Verlust ist nicht endlich (Epoche {epoch + 1}, Schritt {step}).")
            optimizer.zero_grad()
            loss.backward()
            optimizer.step(lr)
            losses.append(value)
            step += 1

        record: dict[str, Any] = {
            "epoch": epoch + 1,
            "lr": lr,
            "train_loss": float(np.mean(losses)),
        }
        if len(test_set):
            report = evaluate(model, test_set, cfg.eval_batch_size)
            record["accuracy"] = dict(report.per_device)
            record["overall"] = report.overall
            result.final_report = report
            if report.overall > best_overall:
                best_overall = report.overall
                result.best_state = model.state_dict()
                result.best_epoch = epoch + 1
                result.best_report = report
        result.metrics.append(record)
        logger.info(
            "Epoche %d/%d: lr=%.5f loss=%.4f overall=%s",
            epoch + 1,
            cfg.epochs,
            lr,
            record["train_loss"],
            f"{record['overall']:.1f}" if "overall" in record else "-",
        )

    result.final_state = model.state_dict()
    if result.best_epoch is None:
        result.best_state = result.final_state
    return result
