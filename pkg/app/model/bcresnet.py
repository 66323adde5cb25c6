"""
BC-ResNet-ASC: Stem-Faltung, vier Stufen aus BC-ResBlöcken, zwei Max-Pools,
1×1-Klassifikator und globale Mittelung über alle Positionen.

Ablauf (Breiten w1..w4 = c, 1.5c, 2c, 2.5c):

    norm0 → conv 5×5/2 (2c) → BN → relu
    → stage1 (2 × w1) → max-pool 2×2 → norm1
    → stage2 (2 × w2) → max-pool 2×2 → norm2
    → stage3 (2 × w3) → norm3
    → stage4 (3 × w4) → norm4
    → conv 1×1 (Klassen) → Mittelwert über (F, T)

norm0..norm4 sind die fünf Normalisierungsplätze; welche Schicht dort sitzt,
bestimmt `ModelConfig.norm_mode`.
"""

from __future__ import annotations

from typing import Any, Callable, Iterator

import numpy as np

from app.config import ModelConfig
from app.core.activations import dropout, relu, swish
from app.core.tensor import Tensor
from app.errors import DimensionError
from app.model.layers import (
    Conv2d,
    Identity,
    LayerGeometry,
    MaxPool,
    Module,
    Sequential,
)
from app.model.normalization import (
    BatchNorm2d,
    GlobalFreqNorm,
    ResNormLayer,
    SubSpectralNorm,
)

NORM_SLOTS = ("norm0", "norm1", "norm2", "norm3", "norm4")


class BCResBlock(Module):
    """
    Broadcasted-Residual-Block.

    f2: frequenz-depthwise 3×1-Faltung + SSN auf der vollen (F, T)-Karte.
    f1: Mittel über F, zeitlich-depthwise 1×3-Faltung + BN + swish + 1×1-Faltung + Dropout;
    das Ergebnis (N, C, 1, T) wird über F zurückgesendet (broadcast).
    Übergangsblöcke passen zuerst die Kanalzahl an und haben keinen Identitätspfad.
    """

    def __init__(self, in_channels: int, out_channels: int, cfg: ModelConfig, rng: np.random.Generator) -> None:
        super().__init__()
        self.transition = in_channels != out_channels
        self.dropout_p = cfg.dropout
        if self.transition:
            self.adapter = Conv2d(in_channels, out_channels, 1, rng)
            self.adapter_bn = BatchNorm2d(out_channels, cfg.bn_momentum, cfg.norm_eps)
        self.freq_dw = Conv2d(out_channels, out_channels, (3, 1), rng, padding=(1, 0), groups=out_channels)
        self.ssn = SubSpectralNorm(out_channels, cfg.ssn_sub_bands, cfg.bn_momentum, cfg.norm_eps)
        self.temp_dw = Conv2d(out_channels, out_channels, (1, 3), rng, padding=(0, 1), groups=out_channels)
        self.temp_bn = BatchNorm2d(out_channels, cfg.bn_momentum, cfg.norm_eps)
        self.pointwise = Conv2d(out_channels, out_channels, 1, rng)

    def forward(self, x: Tensor, *, rng: np.random.Generator | None = None, **kwargs: Any) -> Tensor:
        if self.transition:
            x = relu(self.adapter_bn(self.adapter(x)))
        x2 = self.ssn(self.freq_dw(x))
        pooled = x2.mean(axis=2, keepdims=True)
        f1 = swish(self.temp_bn(self.temp_dw(pooled)))
        f1 = dropout(self.pointwise(f1), self.dropout_p, self.training, rng)
        out = x2 + f1
        if not self.transition:
            if out.shape != x.shape:
                raise DimensionError(f"Residual {x.shape} passt nicht zu {out.shape}.")
            out = out + x
        return relu(out)

    def geometry(self, prefix: str) -> list[LayerGeometry]:
        layers = []
        if self.transition:
            layers.append(self.adapter.geometry(f"{prefix}.adapter"))
        layers.append(self.freq_dw.geometry(f"{prefix}.freq_dw"))
        layers.append(self.temp_dw.geometry(f"{prefix}.temp_dw"))
        layers.append(self.pointwise.geometry(f"{prefix}.pointwise"))
        return layers


def _norm_for(slot: int, cfg: ModelConfig) -> Module:
    mode = cfg.norm_mode
    if mode == "resnorm":
        return ResNormLayer(cfg.resnorm_lambda, cfg.norm_eps)
    if mode == "freqin":
        return ResNormLayer(0.0, cfg.norm_eps)
    if slot == 0 and mode == "input":
        return ResNormLayer(cfg.resnorm_lambda, cfg.norm_eps)
    if slot == 0 and mode == "global":
        return GlobalFreqNorm()
    return Identity()


class BCResNetASC(Module):
    def __init__(self, cfg: ModelConfig, rng: np.random.Generator) -> None:
        super().__init__()
        self.config = cfg
        widths = cfg.stage_widths
        repeats = cfg.stage_repeats
        stem_width = 2 * cfg.base_channels

        self.norm0 = _norm_for(0, cfg)
        self.stem = Conv2d(1, stem_width, 5, rng, stride=2, padding=2, bias=True)
        self.stem_bn = BatchNorm2d(stem_width, cfg.bn_momentum, cfg.norm_eps)

        in_ch = stem_width
        stages = []
        for width, count in zip(widths, repeats):
            blocks = []
            for _ in range(count):
                blocks.append(BCResBlock(in_ch, width, cfg, rng))
                in_ch = width
            stages.append(Sequential(*blocks))
        self.stage1, self.stage2, self.stage3, self.stage4 = stages
        self.pool1 = MaxPool(2)
        self.pool2 = MaxPool(2)
        self.norm1 = _norm_for(1, cfg)
        self.norm2 = _norm_for(2, cfg)
        self.norm3 = _norm_for(3, cfg)
        self.norm4 = _norm_for(4, cfg)
        self.classifier = Conv2d(in_ch, cfg.num_classes, 1, rng, bias=True)

    def forward(
        self,
        x: Tensor,
        *,
        rng: np.random.Generator | None = None,
        augment: Callable[[Tensor], Tensor] | None = None,
        taps: dict[str, Tensor] | None = None,
        **kwargs: Any,
    ) -> Tensor:
        """
        Logits (N, num_classes).

        `augment` wird im Training direkt nach der Eingangsnormalisierung angewendet
        (SpecAugment). `taps` sammelt Zwischenergebnisse für Inspektion und Tests.
        """
        if x.ndim != 4 or x.shape[1] != 1:
            raise DimensionError(f"Erwartet (N, 1, F, T), erhalten {x.shape}.")
        record = taps if taps is not None else {}
        h = self.norm0(x)
        if augment is not None and self.training:
            h = augment(h)
        record["input_norm"] = h
        h = relu(self.stem_bn(self.stem(h)))
        record["stem"] = h
        h = self.norm1(self.pool1(self.stage1(h, rng=rng)))
        record["stage1"] = h
        h = self.norm2(self.pool2(self.stage2(h, rng=rng)))
        record["stage2"] = h
        h = self.norm3(self.stage3(h, rng=rng))
        record["stage3"] = h
        h = self.norm4(self.stage4(h, rng=rng))
        record["stage4"] = h
        logit_map = self.classifier(h)
        record["classifier"] = logit_map
        return logit_map.mean(axis=(2, 3))

    def norm_layers(self) -> list[Module]:
        return [getattr(self, slot) for slot in NORM_SLOTS]

    def resnorm_placements(self) -> int:
        return sum(isinstance(m, ResNormLayer) for m in self.norm_layers())

    def global_norm(self) -> GlobalFreqNorm | None:
        return self.norm0 if isinstance(self.norm0, GlobalFreqNorm) else None

    def conv_layers(self) -> Iterator[tuple[str, Conv2d]]:
        for name, module in self.named_modules():
            if isinstance(module, Conv2d):
                yield name, module

    def conv_weight_names(self) -> list[str]:
        return [f"{name}.weight" for name, _ in self.conv_layers()]

    def geometry(self) -> list[LayerGeometry]:
        """Faltungen und Pools entlang des Hauptpfads in Vorwärtsreihenfolge."""
        layers = [self.stem.geometry("stem")]
        for index, stage in enumerate((self.stage1, self.stage2, self.stage3, self.stage4), start=1):
            for b, block in enumerate(stage):
                layers.extend(block.geometry(f"stage{index}.{b}"))
            if index == 1:
                layers.append(self.pool1.geometry("pool1"))
            if index == 2:
                layers.append(self.pool2.geometry("pool2"))
        layers.append(self.classifier.geometry("classifier"))
        return layers


def build(cfg: ModelConfig, seed: int = 0) -> BCResNetASC:
    """Baut das Netz; gleiche Konfiguration und gleicher Seed ergeben identische Gewichte."""
    return BCResNetASC(cfg, np.random.default_rng(seed))
