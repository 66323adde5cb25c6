"""Beispiele, Datensatz-Container und die Geräte × Split-Übersicht."""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np

from app.config import DEVICES
from app.errors import ArgumentError, ManifestError

SPLITS = ("train", "test")

# Szenenklassen des TAU-Urban-Acoustic-Scenes-2020-Mobile-Datensatzes (Index = Klasse).
TAU_SCENES = (
    "airport",
    "bus",
    "metro",
    "metro_station",
    "park",
    "public_square",
    "shopping_mall",
    "street_pedestrian",
    "street_traffic",
    "tram",
)


@dataclass(frozen=True)
class SceneExample:
    id: str
    features: np.ndarray = field(repr=False, compare=False)
    scene: int
    device: str
    split: str
    source: str | None = None

    def __post_init__(self) -> None:
        if self.device not in DEVICES:
            raise ManifestError(f"Unbekanntes Gerät '{self.device}' ({self.id}).")
        if self.split not in SPLITS:
            raise ManifestError(f"Unbekannter Split '{self.split}' ({self.id}).")
        if self.scene < 0:
            raise ManifestError(f"Ungültige Szenenklasse {self.scene} ({self.id}).")


class SceneDataset:
    """Geordnete Sammlung von Beispielen; Merkmale haben die Form (1, 1, F, T)."""

    def __init__(self, examples: Iterable[SceneExample] = (), num_classes: int = 10) -> None:
        self.examples = list(examples)
        self.num_classes = num_classes
        seen: set[str] = set()
        for ex in self.examples:
            if ex.id in seen:
                raise ManifestError(f"Beispiel-ID '{ex.id}' ist doppelt vorhanden.")
            if ex.scene >= num_classes:
                raise ManifestError(f"Klasse {ex.scene} ≥ num_classes={num_classes} ({ex.id}).")
            seen.add(ex.id)

    def __len__(self) -> int:
        return len(self.examples)

    def __iter__(self) -> Iterator[SceneExample]:
        return iter(self.examples)

    def __getitem__(self, index: int) -> SceneExample:
        return self.examples[index]

    def split(self, name: str) -> "SceneDataset":
        if name not in SPLITS:
            raise ArgumentError(f"Unbekannter Split '{name}'.")
        return SceneDataset((ex for ex in self.examples if ex.split == name), self.num_classes)

    def features(self, indices: Sequence[int] | None = None) -> np.ndarray:
        """Stapelt Merkmale zu (N, 1, F, T) float32."""
        chosen = self.examples if indices is None else [self.examples[i] for i in indices]
        if not chosen:
            raise ArgumentError("Keine Beispiele zum Stapeln.")
        return np.concatenate([ex.features for ex in chosen], axis=0).astype(np.float32)

    def labels(self, indices: Sequence[int] | None = None) -> np.ndarray:
        chosen = self.examples if indices is None else [self.examples[i] for i in indices]
        return np.array([ex.scene for ex in chosen], dtype=np.int64)

    def devices(self) -> list[str]:
        return [ex.device for ex in self.examples]

    def ids(self) -> list[str]:
        return [ex.id for ex in self.examples]


@dataclass(frozen=True)
class SplitReport:
    counts: "OrderedDict[str, dict[str, int]]"

    @property
    def unseen(self) -> tuple[str, ...]:
        return tuple(d for d, c in self.counts.items() if c["train"] == 0)

    def to_dict(self) -> dict:
        return {"counts": dict(self.counts), "unseen": list(self.unseen)}

    def format(self) -> str:
        lines = ["Gerät\ttrain\ttest\tungesehen"]
        for device, c in self.counts.items():
            flag = "ja" if c["train"] == 0 else ""
            lines.append(f"{device}\t{c['train']}\t{c['test']}\t{flag}")
        return "\n".join(lines)


def split_report(ds: SceneDataset) -> SplitReport:
    """Anzahl je (Gerät, Split); Geräte ohne Trainingsbeispiele gelten als ungesehen."""
    counts: OrderedDict[str, dict[str, int]] = OrderedDict(
        (device, {"train": 0, "test": 0}) for device in DEVICES
    )
    for ex in ds:
        counts[ex.device][ex.split] += 1
    return SplitReport(counts)
