"""Speicherbedarf: Faltungsgewichte ungleich 0 mit 1 Byte, übrige Parameter mit 2 Byte."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from app.compression.pruning import CompressionState
from app.model.checkpoint import DTYPE_F16, DTYPE_F32, DTYPE_I8, Checkpoint
from app.model.layers import Module


@dataclass(frozen=True)
class SizeRow:
    name: str
    storage: str  # "i8", "f16" oder "f32"
    count: int
    bytes: int


@dataclass
class SizeReport:
    rows: list[SizeRow] = field(default_factory=list)

    @property
    def conv_nonzero(self) -> int:
        return sum(r.count for r in self.rows if r.storage == "i8")

    @property
    def other_params(self) -> int:
        return sum(r.count for r in self.rows if r.storage == "f16")

    @property
    def total_bytes(self) -> int:
        return sum(r.bytes for r in self.rows)

    @property
    def kib(self) -> float:
        return self.total_bytes / 1024

    def to_dict(self) -> dict:
        return {
            "rows": [r.__dict__ for r in self.rows],
            "conv_nonzero": self.conv_nonzero,
            "other_params": self.other_params,
            "total_bytes": self.total_bytes,
            "kib": self.kib,
        }


def size_report(model: Module, state: CompressionState | None = None) -> SizeReport:
    """
    Ohne Kompressionszustand werden alle Parameter als f32 (4 Byte) gezählt.

    Mit Zustand: Faltungsgewichte zählen nur ihre Einträge ungleich 0 (i8, 1 Byte),
    alle anderen Parameter einschliesslich Faltungs-Bias 2 Byte (f16). Buffer zählen nicht.
    """
    rows = []
    for name, tensor in model.named_parameters():
        if state is None:
            rows.append(SizeRow(name, "f32", tensor.size, 4 * tensor.size))
        elif name in state.masks:
            nonzero = int(np.count_nonzero(tensor.data))
            rows.append(SizeRow(name, "i8", nonzero, nonzero))
        else:
            rows.append(SizeRow(name, "f16", tensor.size, 2 * tensor.size))
    return SizeReport(rows)


def size_from_checkpoint(checkpoint: Checkpoint) -> SizeReport:
    """Zählt dieselbe Grösse allein aus den Checkpoint-Einträgen nach."""
    rows = []
    for name, entry in checkpoint.entries.items():
        if entry.buffer:
            continue
        if entry.dtype == DTYPE_I8:
            nonzero = int(np.count_nonzero(entry.payload))
            rows.append(SizeRow(name, "i8", nonzero, nonzero))
        elif entry.dtype == DTYPE_F16:
            rows.append(SizeRow(name, "f16", entry.payload.size, 2 * entry.payload.size))
        elif entry.dtype == DTYPE_F32:
            rows.append(SizeRow(name, "f32", entry.payload.size, 4 * entry.payload.size))
    return SizeReport(rows)
