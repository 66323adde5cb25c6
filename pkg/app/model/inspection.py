"""Strukturkennzahlen des Modells: Parameterzählung, rezeptives Feld, Stufenformen."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from app.core.tensor import Tensor, no_grad
from app.model.bcresnet import BCResNetASC
from app.model.layers import Conv2d, LayerGeometry, Module


@dataclass(frozen=True)
class ParamRow:
    name: str
    count: int
    group: str  # "conv" oder "norm"


@dataclass
class ParamTable:
    rows: list[ParamRow] = field(default_factory=list)

    @property
    def conv(self) -> int:
        return sum(r.count for r in self.rows if r.group == "conv")

    @property
    def norm(self) -> int:
        return sum(r.count for r in self.rows if r.group == "norm")

    @property
    def total(self) -> int:
        return self.conv + self.norm

    def to_dict(self) -> dict:
        return {
            "rows": [{"name": r.name, "count": r.count, "group": r.group} for r in self.rows],
            "conv": self.conv,
            "norm": self.norm,
            "total": self.total,
        }


def count_params(model: Module) -> ParamTable:
    """
    Zählt lernbare Parameter je Registry-Name.

    Faltungsgewichte und Faltungs-Bias zählen als "conv", alles andere
    (Affin-Parameter von BN/SSN) als "norm". Buffer zählen nicht.
    """
    conv_names: set[str] = set()
    for prefix, module in model.named_modules():
        if isinstance(module, Conv2d):
            conv_names.add(f"{prefix}.weight")
            conv_names.add(f"{prefix}.bias")
    rows = [
        ParamRow(name, tensor.size, "conv" if name in conv_names else "norm")
        for name, tensor in model.named_parameters()
    ]
    return ParamTable(rows)


def receptive_field(
    graph: BCResNetASC | Sequence[LayerGeometry], *, pool_windows: bool = False
) -> tuple[int, int]:
    """
    Rezeptives Feld (Frequenz, Zeit) über rf ← rf + (k−1)·jump, jump ← jump·stride.

    Pooling-Schichten wirken standardmässig nur als Dezimierung (Schrittweite); mit
    `pool_windows=True` zählt auch ihr Fenster. Die Frequenzmittelung im Block und der
    Broadcast zurück gehen nicht ein.
    """
    layers = graph.geometry() if isinstance(graph, BCResNetASC) else list(graph)
    rf = [1, 1]
    jump = [1, 1]
    for layer in layers:
        for axis in (0, 1):
            k = layer.kernel[axis]
            if layer.kind == "pool" and not pool_windows:
                k = 1
            rf[axis] += (k - 1) * jump[axis]
            jump[axis] *= layer.stride[axis]
    return rf[0], rf[1]


def stage_shapes(
    model: BCResNetASC, input_shape: tuple[int, int, int, int] = (1, 1, 256, 330)
) -> list[tuple[str, tuple[int, ...]]]:
    """Formen nach Stem, jeder Stufe und dem Klassifikator für eine Null-Eingabe im Eval-Modus."""
    was_training = model.training
    model.eval()
    taps: dict[str, Tensor] = {}
    try:
        with no_grad():
            logits = model(Tensor(np.zeros(input_shape)), taps=taps)
    finally:
        model.train(was_training)
    shapes = [(name, tuple(t.shape)) for name, t in taps.items() if name != "input_norm"]
    shapes.append(("logits", tuple(logits.shape)))
    return shapes
