"""
Konfiguration: Umgebungsvariablen (.env) und flache key=value-Experimentdateien.

Umgebungsvariablen werden über python-dotenv aus einer lokalen `.env` geladen.
Experimentdateien haben dasselbe Format (`key=value` pro Zeile) und werden mit
`dotenv_values` gelesen; jeder Schlüssel entspricht genau einem Feld der
Konfigurationsklassen unten. Unbekannte Schlüssel sind ein harter Fehler.
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Optional, get_type_hints

from dotenv import dotenv_values, load_dotenv

from app.errors import ConfigError

# Lädt Umgebungsvariablen aus einer .env-Datei, falls vorhanden.
load_dotenv()

DEVICES: tuple[str, ...] = ("A", "B", "C", "S1", "S2", "S3", "S4", "S5", "S6")
UNSEEN_DEVICES: tuple[str, ...] = ("S4", "S5", "S6")
NORM_MODES: tuple[str, ...] = ("resnorm", "freqin", "input", "global", "none")


def cache_dir() -> Path:
    """Verzeichnis des Merkmals-Caches (überschreibbar mit BCRA_CACHE_DIR)."""
    return Path(os.getenv("BCRA_CACHE_DIR", ".bcra_cache"))


def runs_dir() -> Path:
    """Verzeichnis, dessen Läufe der Report-Service ausliefert."""
    return Path(os.getenv("BCRA_RUNS_DIR", "runs"))


def log_level() -> str:
    return os.getenv("BCRA_LOG_LEVEL", "INFO").upper()


def _default_train_sizes() -> dict[str, int]:
    return {"A": 600, "B": 50, "C": 50, "S1": 50, "S2": 50, "S3": 50, "S4": 0, "S5": 0, "S6": 0}


@dataclass(frozen=True)
class ModelConfig:
    base_channels: int = 10
    num_classes: int = 10
    dropout: float = 0.1
    ssn_sub_bands: int = 4
    resnorm_lambda: float = 0.1
    norm_mode: str = "resnorm"
    bn_momentum: float = 0.1
    norm_eps: float = 1e-5

    def __post_init__(self) -> None:
        if self.base_channels <= 0:
            raise ConfigError(f"base_channels muss positiv sein (erhalten {self.base_channels}).")
        if self.num_classes <= 0:
            raise ConfigError("num_classes muss positiv sein.")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout {self.dropout} liegt nicht in [0, 1).")
        if self.ssn_sub_bands <= 0:
            raise ConfigError("ssn_sub_bands muss positiv sein.")
        if self.resnorm_lambda < 0:
            raise ConfigError("resnorm_lambda darf nicht negativ sein.")
        if self.norm_mode not in NORM_MODES:
            raise ConfigError(f"norm_mode '{self.norm_mode}' unbekannt, erlaubt: {', '.join(NORM_MODES)}.")
        if self.norm_eps <= 0:
            raise ConfigError("norm_eps muss positiv sein.")

    @property
    def stage_widths(self) -> tuple[int, int, int, int]:
        c = self.base_channels
        return c, int(1.5 * c), 2 * c, int(2.5 * c)

    @property
    def stage_repeats(self) -> tuple[int, int, int, int]:
        return 2, 2, 2, 3


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    batch_size: int = 64
    momentum: float = 0.9
    weight_decay: float = 0.001
    peak_lr: float = 0.06
    warmup_epochs: int = 5
    kd_temperature: float = 4.0
    kd_weight: float = 0.5
    teacher_checkpoint: Optional[str] = None
    eval_batch_size: int = 128

    def __post_init__(self) -> None:
        if self.peak_lr <= 0:
            raise ConfigError("peak_lr muss positiv sein.")
        if self.epochs < 0 or self.batch_size <= 0:
            raise ConfigError("epochs/batch_size sind ungültig.")
        if self.epochs > 0 and not 0 <= self.warmup_epochs < self.epochs:
            raise ConfigError("warmup_epochs muss kleiner als epochs sein.")
        if self.kd_temperature <= 0:
            raise ConfigError("kd_temperature muss positiv sein.")
        if not 0.0 <= self.kd_weight <= 1.0:
            raise ConfigError("kd_weight muss in [0, 1] liegen.")


@dataclass(frozen=True)
class AugmentConfig:
    roll_range_s: float = 1.5
    frame_hop_ms: int = 30
    mixup_alpha: float = 0.3
    freq_masks: int = 2
    freq_mask_param: int = 40
    time_masks: int = 2
    time_mask_param: int = 80
    specaugment_enabled: bool = False
    roll_enabled: bool = True
    mixup_enabled: bool = True

    def __post_init__(self) -> None:
        if self.mixup_alpha <= 0:
            raise ConfigError("mixup_alpha muss positiv sein.")
        if self.freq_mask_param < 0 or self.time_mask_param < 0:
            raise ConfigError("Maskenparameter dürfen nicht negativ sein.")

    @property
    def roll_max_frames(self) -> int:
        """±1.5 s bei 30 ms Vorschub ergibt ±50 Frames."""
        return int(round(self.roll_range_s * 1000 / self.frame_hop_ms))


@dataclass(frozen=True)
class DataConfig:
    train_sizes: dict = field(default_factory=_default_train_sizes)
    test_per_device: int = 40
    synth_freq_bins: int = 64
    synth_frames: int = 64
    device_noise: float = 0.3
    content_noise: float = 0.5

    def __post_init__(self) -> None:
        unknown = set(self.train_sizes) - set(DEVICES)
        if unknown:
            raise ConfigError(f"train_sizes enthält unbekannte Geräte: {', '.join(sorted(unknown))}.")
        if any(v < 0 for v in self.train_sizes.values()) or self.test_per_device < 0:
            raise ConfigError("Beispielzahlen dürfen nicht negativ sein.")


@dataclass(frozen=True)
class CompressConfig:
    prune_ratio: float = 0.89
    conv_bits: int = 8
    finetune_epochs: int = 50
    use_kd: bool = False

    def __post_init__(self) -> None:
        if not 0.0 <= self.prune_ratio < 1.0:
            raise ConfigError(f"prune_ratio {self.prune_ratio} liegt nicht in [0, 1).")
        if self.conv_bits != 8:
            raise ConfigError("Nur 8-Bit-Quantisierung der Faltungen wird unterstützt.")


_SECTIONS = {
    "model": ModelConfig,
    "train": TrainConfig,
    "augment": AugmentConfig,
    "data": DataConfig,
    "compress": CompressConfig,
}


def _parse_bool(raw: str) -> bool:
    lowered = raw.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(raw)


def _parse_sizes(raw: str) -> dict[str, int]:
    sizes: dict[str, int] = {}
    for item in raw.split(","):
        if not item.strip():
            continue
        device, _, count = item.partition(":")
        sizes[device.strip()] = int(count)
    return sizes


def _coerce(key: str, raw: Any, hint: Any) -> Any:
    if not isinstance(raw, str):
        return raw
    try:
        if hint is bool:
            return _parse_bool(raw)
        if hint is int:
            return int(raw)
        if hint is float:
            return float(raw)
        if hint is dict:
            return _parse_sizes(raw)
        if hint == Optional[str]:
            return raw or None
        return raw
    except ValueError as exc:
        raise ConfigError(f"Ungültiger Wert für '{key}': {raw!r}") from exc


def _format(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, dict):
        return ",".join(f"{k}:{v}" for k, v in value.items())
    if value is None:
        return ""
    return str(value)


@dataclass(frozen=True)
class ExperimentConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    data: DataConfig = field(default_factory=DataConfig)
    compress: CompressConfig = field(default_factory=CompressConfig)

    @classmethod
    def from_mapping(cls, values: Mapping[str, Any]) -> "ExperimentConfig":
        """Verteilt flache Schlüssel auf die Abschnitte; unbekannte Schlüssel sind Fehler."""
        per_section: dict[str, dict[str, Any]] = {name: {} for name in _SECTIONS}
        owners = {
            f.name: (section, get_type_hints(klass)[f.name])
            for section, klass in _SECTIONS.items()
            for f in dataclasses.fields(klass)
        }
        for key, raw in values.items():
            if key not in owners:
                raise ConfigError(f"Unbekannter Konfigurationsschlüssel '{key}'.")
            section, hint = owners[key]
            per_section[section][key] = _coerce(key, raw, hint)
        try:
            return cls(**{name: _SECTIONS[name](**kw) for name, kw in per_section.items()})
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_file(cls, path: str | Path | None) -> "ExperimentConfig":
        if path is None:
            return cls()
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"Konfigurationsdatei nicht gefunden: {path}")
        values = dotenv_values(path)
        return cls.from_mapping({k: ("" if v is None else v) for k, v in values.items()})

    def replace(self, **sections: Any) -> "ExperimentConfig":
        return dataclasses.replace(self, **sections)

    def to_flat(self) -> str:
        """Gibt die Konfiguration wieder im key=value-Format aus."""
        lines = []
        for name in _SECTIONS:
            section = getattr(self, name)
            lines.append(f"# {name}")
            for f in dataclasses.fields(section):
                lines.append(f"{f.name}={_format(getattr(section, f.name))}")
        return "\n".join(lines) + "\n"
