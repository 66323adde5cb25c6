"""
Manifest-Lader für echte Aufnahmen und exportierte Merkmale.

Manifest: tabulatorgetrennt mit Kopfzeile `path  scene  device  split`.
`path` ist eine WAV-Datei oder `<datei>.bcaf#<id>` (Datensatz eines Merkmals-Caches);
relative Pfade gelten relativ zum Manifest. `scene` ist ein Klassenindex oder ein
Szenenname. Log-Mel-Merkmale von WAV-Dateien werden im Cache-Verzeichnis abgelegt
(BCRA_CACHE_DIR) und beim nächsten Laden ohne DSP wiederverwendet.
"""

from __future__ import annotations

import csv
import hashlib
import logging
from pathlib import Path
from typing import Iterable

import numpy as np

from app.audio.feature_cache import load_features, save_features
from app.audio.frontend import MelConfig, waveform_to_features
from app.config import DEVICES, cache_dir
from app.data.dataset import SPLITS, TAU_SCENES, SceneDataset, SceneExample
from app.errors import DataIOError, ManifestError
from app.helpers.io_helpers import atomic_write_text

logger = logging.getLogger(__name__)

COLUMNS = ("path", "scene", "device", "split")
FEATURE_REF = ".bcaf#"


def _parse_scene(raw: str, line: int) -> int:
    raw = raw.strip()
    if raw.isdigit():
        return int(raw)
    if raw in TAU_SCENES:
        return TAU_SCENES.index(raw)
    raise ManifestError(f"Zeile {line}: unbekannte Szene '{raw}'.")


def _cache_key(path: Path, cfg: MelConfig) -> str:
    stat = path.stat()
    fingerprint = f"{path.resolve()}|{stat.st_size}|{stat.st_mtime_ns}|{cfg}"
    return hashlib.sha1(fingerprint.encode("utf-8")).hexdigest()


def cached_features(path: Path, cfg: MelConfig = MelConfig(), use_cache: bool = True) -> np.ndarray:
    """Log-Mel einer WAV-Datei, aus dem Cache falls vorhanden."""
    if not path.exists():
        raise DataIOError(f"Audiodatei nicht gefunden: {path}")
    if not use_cache:
        return waveform_to_features(path, cfg)
    key = _cache_key(path, cfg)
    target = cache_dir() / f"{key}.bcaf"
    if target.exists():
        logger.debug("Cache-Treffer für %s", path)
        return load_features(target)[key]
    logger.debug("Cache-Fehlschlag für %s", path)
    features = waveform_to_features(path, cfg)
    save_features(target, {key: features})
    return features


class _FeatureFiles:
    """Hält geöffnete BCAF-Dateien, damit jede nur einmal gelesen wird."""

    def __init__(self) -> None:
        self._files: dict[Path, dict[str, np.ndarray]] = {}

    def lookup(self, reference: str, base: Path, line: int) -> np.ndarray:
        file_part, _, record = reference.partition("#")
        path = Path(file_part)
        if not path.is_absolute():
            path = base / path
        if path not in self._files:
            self._files[path] = load_features(path)
        try:
            return self._files[path][record]
        except KeyError as exc:
            raise ManifestError(f"Zeile {line}: Datensatz '{record}' fehlt in {path}.") from exc


def load_real(
    manifest_path: str | Path,
    cfg: MelConfig = MelConfig(),
    num_classes: int = 10,
    use_cache: bool = True,
) -> SceneDataset:
    manifest_path = Path(manifest_path)
    if not manifest_path.exists():
        raise DataIOError(f"Manifest nicht gefunden: {manifest_path}")
    base = manifest_path.parent
    feature_files = _FeatureFiles()
    examples = []
    with manifest_path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh, delimiter="\t")
        if reader.fieldnames is None:
            return SceneDataset([], num_classes)
        missing = [c for c in COLUMNS if c not in reader.fieldnames]
        if missing:
            raise ManifestError(f"Manifest ohne Spalten: {', '.join(missing)}.")
        for line, row in enumerate(reader, start=2):
            device = row["device"].strip()
            if device not in DEVICES:
                raise ManifestError(f"Zeile {line}: unbekanntes Gerät '{device}'.")
            split = row["split"].strip()
            if split not in SPLITS:
                raise ManifestError(f"Zeile {line}: unbekannter Split '{split}'.")
            scene = _parse_scene(row["scene"], line)
            reference = row["path"].strip()
            if FEATURE_REF in reference:
                features = feature_files.lookup(reference, base, line)
                ident = reference.partition("#")[2]
            else:
                wav = Path(reference)
                wav = wav if wav.is_absolute() else base / wav
                features = cached_features(wav, cfg, use_cache)
                ident = reference
            examples.append(SceneExample(ident, features, scene, device, split, source=reference))
    logger.info("Manifest %s: %d Beispiele", manifest_path, len(examples))
    return SceneDataset(examples, num_classes)


def write_manifest(path: str | Path, rows: Iterable[tuple[str, int, str, str]]) -> Path:
    lines = ["\t".join(COLUMNS)]
    lines.extend(f"{ref}\t{scene}\t{device}\t{split}" for ref, scene, device, split in rows)
    return atomic_write_text(path, "\n".join(lines) + "\n")
