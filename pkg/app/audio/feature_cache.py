"""
Binärformat "BCAF" für zwischengespeicherte Log-Mel-Merkmale.

Aufbau (little endian):
    magic b"BCAF" | version u16 | Anzahl u32 |
    je Datensatz: Namenslänge u16 | Name utf-8 | F u32 | T u32 | F·T × f32
Geschrieben wird immer in eine temporäre Datei, die anschliessend umbenannt wird
(ein Schreiber, beliebig viele Leser).
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Mapping

import numpy as np

from app.errors import DataIOError, FormatError
from app.helpers.io_helpers import atomic_write_bytes

MAGIC = b"BCAF"
VERSION = 1


def encode_features(features: Mapping[str, np.ndarray]) -> bytes:
    """Serialisiert {id: (F, T) oder (1, 1, F, T)} in das BCAF-Format."""
    chunks = [MAGIC, struct.pack("<HI", VERSION, len(features))]
    for name, fmap in features.items():
        arr = np.asarray(fmap, dtype="<f4")
        arr = arr.reshape(arr.shape[-2], arr.shape[-1])
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<II", arr.shape[0], arr.shape[1]))
        chunks.append(arr.tobytes())
    return b"".join(chunks)


class BinaryReader:
    """Liest Felder aus einem Puffer und kennt stets den aktuellen Offset."""

    def __init__(self, payload: bytes, label: str) -> None:
        self.payload = payload
        self.offset = 0
        self.label = label

    def take(self, size: int) -> bytes:
        end = self.offset + size
        if end > len(self.payload):
            raise FormatError(f"{self.label}: Datei endet unerwartet", offset=self.offset)
        chunk = self.payload[self.offset : end]
        self.offset = end
        return chunk

    def unpack(self, fmt: str) -> tuple:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def decode_features(payload: bytes) -> dict[str, np.ndarray]:
    """Gegenstück zu `encode_features`; liefert {id: (1, 1, F, T) float32}."""
    reader = BinaryReader(payload, "Merkmals-Cache")
    if reader.take(4) != MAGIC:
        raise FormatError("Merkmals-Cache: falsche Kennung", offset=0)
    version, count = reader.unpack("<HI")
    if version != VERSION:
        raise FormatError(f"Merkmals-Cache: Version {version} nicht unterstützt", offset=4)
    out: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = reader.unpack("<H")
        start = reader.offset
        try:
            name = reader.take(name_len).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FormatError("Merkmals-Cache: ungültiger Name", offset=start) from exc
        n_freq, n_frames = reader.unpack("<II")
        data = np.frombuffer(reader.take(4 * n_freq * n_frames), dtype="<f4")
        out[name] = data.astype(np.float32).reshape(1, 1, n_freq, n_frames)
    if reader.offset != len(payload):
        raise FormatError("Merkmals-Cache: überzählige Bytes", offset=reader.offset)
    return out


def save_features(path: str | Path, features: Mapping[str, np.ndarray]) -> Path:
    return atomic_write_bytes(path, encode_features(features))


def load_features(path: str | Path) -> dict[str, np.ndarray]:
    path = Path(path)
    if not path.exists():
        raise DataIOError(f"Merkmals-Cache nicht gefunden: {path}")
    return decode_features(path.read_bytes())
