"""
Kompressionsablauf: vortrainiertes Modell → Pruning → Nachtraining mit aktiver
Fake-Quantisierung und festen Masken (optional mit Distillation) → Übernahme der
quantisierten Werte, sodass ein i8/f16-Checkpoint bitgenau dem Trainingsgraphen entspricht.
"""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass

from app.compression.pruning import CompressionState, prune
from app.compression.quantization import fake_half, fake_quant, quantize_symmetric
from app.compression.size import SizeReport, size_report
from app.config import ExperimentConfig
from app.core.tensor import Tensor
from app.data.dataset import SceneDataset
from app.errors import ConfigError
from app.model.bcresnet import BCResNetASC
from app.model.layers import ParamHook
from app.training.trainer import EvalReport, TrainResult, evaluate, train

logger = logging.getLogger(__name__)


@dataclass
class CompressionResult:
    model: BCResNetASC
    state: CompressionState
    training: TrainResult
    report: EvalReport | None
    size: SizeReport


def compression_hook(state: CompressionState) -> ParamHook:
    """Faltungsgewichte laufen durch fake_quant, alle anderen Parameter durch fake_half."""

    def hook(path: str, tensor: Tensor) -> Tensor:
        if path in state.masks:
            return fake_quant(tensor, state.conv_bits)
        return fake_half(tensor)

    return hook


def materialize(model: BCResNetASC, state: CompressionState) -> None:
    """Schreibt die transformierten Werte in die Parameter und entfernt den Hook."""
    hook = compression_hook(state)
    for name, tensor in model.named_parameters():
        tensor.data = hook(name, Tensor(tensor.data, dtype=tensor.dtype)).data.copy()
        if name in state.masks:
            _, scale = quantize_symmetric(tensor.data, state.conv_bits)
            state.scales[name] = float(scale)
    model.clear_param_hook()


def _finetune_config(cfg: ExperimentConfig):
    epochs = cfg.compress.finetune_epochs
    warmup = min(cfg.train.warmup_epochs, max(epochs - 1, 0))
    return dataclasses.replace(cfg.train, epochs=epochs, warmup_epochs=warmup)


def compress_pipeline(
    model: BCResNetASC,
    dataset: SceneDataset,
    cfg: ExperimentConfig,
    seed: int,
    teacher: BCResNetASC | None = None,
) -> CompressionResult:
    if cfg.compress.use_kd and teacher is None:
        raise ConfigError("Distillation ist aktiviert, aber kein Lehrermodell angegeben (--teacher).")
    state = prune(model, cfg.compress.prune_ratio)
    model.install_param_hook(compression_hook(state))
    try:
        result = train(
            model,
            dataset,
            _finetune_config(cfg),
            cfg.augment,
            seed,
            teacher=teacher if cfg.compress.use_kd else None,
            masks=state.masks,
        )
        model.load_state_dict(result.best_state)
    finally:
        model.clear_param_hook()
    materialize(model, state)
    model.eval()
    test_set = dataset.split("test")
    report = evaluate(model, test_set, cfg.train.eval_batch_size) if len(test_set) else None
    size = size_report(model, state)
    logger.info(
        "Kompression: %d Faltungsgewichte ≠ 0, %d weitere Parameter, %.2f KiB",
        size.conv_nonzero,
        size.other_params,
        size.kib,
    )
    return CompressionResult(model, state, result, report, size)
