"""
Checkpoint-Format "BCRA" (little endian).

    magic b"BCRA" | version u16 | Länge u32 | JSON-Datensatz (Modellkonfiguration + Metadaten)
    | Anzahl u32 | je Eintrag:
        Namenslänge u16 | Name utf-8 | dtype u8 (0=f32, 1=f16, 2=i8) | flags u8
        | ndim u8 | Form ndim × u32 | Nutzdaten | [Skala f32, falls flags & 1]

flags: Bit 0 = Eintrag hat Quantisierungsskala, Bit 1 = Eintrag ist ein Buffer.
Komprimierte Checkpoints speichern Faltungsgewichte als i8 mit Skala und alle übrigen
Parameter als f16; Buffer bleiben f32. Beim Laden entstehen deterministisch f32-Gewichte.
"""

from __future__ import annotations

import dataclasses
import json
import struct
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from app.audio.feature_cache import BinaryReader
from app.compression.quantization import dequantize, quantize_symmetric
from app.config import ModelConfig
from app.errors import ConfigError, DataIOError, FormatError
from app.helpers.io_helpers import atomic_write_bytes
from app.model.bcresnet import BCResNetASC, build

MAGIC = b"BCRA"
VERSION = 1

DTYPE_F32, DTYPE_F16, DTYPE_I8 = 0, 1, 2
_NUMPY_DTYPES = {DTYPE_F32: "<f4", DTYPE_F16: "<f2", DTYPE_I8: "i1"}
FLAG_SCALE = 1
FLAG_BUFFER = 2


@dataclass
class Entry:
    name: str
    dtype: int
    payload: np.ndarray
    scale: float | None = None
    buffer: bool = False

    def to_float32(self) -> np.ndarray:
        if self.dtype == DTYPE_I8:
            return dequantize(self.payload, self.scale if self.scale is not None else 1.0)
        return self.payload.astype(np.float32)


@dataclass
class Checkpoint:
    model_config: ModelConfig
    entries: "OrderedDict[str, Entry]"
    meta: dict[str, Any] = field(default_factory=dict)

    @property
    def compressed(self) -> bool:
        return any(e.dtype != DTYPE_F32 for e in self.entries.values())

    def state(self) -> "OrderedDict[str, np.ndarray]":
        return OrderedDict((name, e.to_float32()) for name, e in self.entries.items())

    def to_model(self) -> BCResNetASC:
        model = build(self.model_config)
        model.load_state_dict(self.state())
        model.eval()
        return model


def _entries_for(model: BCResNetASC, compressed: bool) -> "OrderedDict[str, Entry]":
    conv_weights = set(model.conv_weight_names())
    entries: OrderedDict[str, Entry] = OrderedDict()
    for name, tensor in model.named_parameters():
        data = tensor.data
        if not compressed:
            entries[name] = Entry(name, DTYPE_F32, data.astype(np.float32))
        elif name in conv_weights:
            q, scale = quantize_symmetric(data)
            entries[name] = Entry(name, DTYPE_I8, q, float(scale))
        else:
            entries[name] = Entry(name, DTYPE_F16, data.astype(np.float16))
    for name, value in model.named_buffers():
        entries[name] = Entry(name, DTYPE_F32, value.astype(np.float32), buffer=True)
    return entries


def encode_checkpoint(
    model: BCResNetASC, *, compressed: bool = False, meta: dict[str, Any] | None = None
) -> bytes:
    record = json.dumps(
        {"model": dataclasses.asdict(model.config), "meta": meta or {}, "compressed": compressed},
        sort_keys=True,
    ).encode("utf-8")
    entries = _entries_for(model, compressed)
    chunks = [MAGIC, struct.pack("<HI", VERSION, len(record)), record, struct.pack("<I", len(entries))]
    for entry in entries.values():
        encoded = entry.name.encode("utf-8")
        flags = (FLAG_SCALE if entry.scale is not None else 0) | (FLAG_BUFFER if entry.buffer else 0)
        shape = entry.payload.shape
        chunks.append(struct.pack("<H", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<BBB", entry.dtype, flags, len(shape)))
        chunks.append(struct.pack(f"<{len(shape)}I", *shape))
        chunks.append(np.ascontiguousarray(entry.payload, dtype=_NUMPY_DTYPES[entry.dtype]).tobytes())
        if entry.scale is not None:
            chunks.append(struct.pack("<f", entry.scale))
    return b"".join(chunks)


def decode_checkpoint(payload: bytes) -> Checkpoint:
    reader = BinaryReader(payload, "Checkpoint")
    if reader.take(4) != MAGIC:
        raise FormatError("Checkpoint: falsche Kennung", offset=0)
    version, record_len = reader.unpack("<HI")
    if version != VERSION:
        raise FormatError(f"Checkpoint: Version {version} nicht unterstützt", offset=4)
    record_offset = reader.offset
    try:
        record = json.loads(reader.take(record_len).decode("utf-8"))
        model_config = ModelConfig(**record["model"])
    except (ValueError, KeyError, TypeError) as exc:
        raise FormatError("Checkpoint: Konfigurationsdatensatz ungültig", offset=record_offset) from exc

    (count,) = reader.unpack("<I")
    entries: OrderedDict[str, Entry] = OrderedDict()
    for _ in range(count):
        start = reader.offset
        (name_len,) = reader.unpack("<H")
        try:
            name = reader.take(name_len).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FormatError("Checkpoint: ungültiger Name", offset=start) from exc
        dtype_offset = reader.offset
        dtype, flags, ndim = reader.unpack("<BBB")
        if dtype not in _NUMPY_DTYPES:
            raise FormatError(f"Checkpoint: unbekannter dtype {dtype} für '{name}'", offset=dtype_offset)
        shape = reader.unpack(f"<{ndim}I") if ndim else ()
        np_dtype = np.dtype(_NUMPY_DTYPES[dtype])
        size = int(np.prod(shape, dtype=np.int64)) if shape else 1
        data = np.frombuffer(reader.take(size * np_dtype.itemsize), dtype=np_dtype).reshape(shape)
        scale = reader.unpack("<f")[0] if flags & FLAG_SCALE else None
        entries[name] = Entry(name, dtype, data.copy(), scale, bool(flags & FLAG_BUFFER))
    if reader.offset != len(payload):
        raise FormatError("Checkpoint: überzählige Bytes", offset=reader.offset)
    return Checkpoint(model_config, entries, record.get("meta", {}))


def save_checkpoint(
    path: str | Path,
    model: BCResNetASC,
    *,
    compressed: bool = False,
    meta: dict[str, Any] | None = None,
) -> Path:
    return atomic_write_bytes(path, encode_checkpoint(model, compressed=compressed, meta=meta))


def read_checkpoint(path: str | Path) -> Checkpoint:
    path = Path(path)
    if not path.exists():
        raise DataIOError(f"Checkpoint nicht gefunden: {path}")
    return decode_checkpoint(path.read_bytes())


def load_model(path: str | Path, expected: ModelConfig | None = None) -> BCResNetASC:
    """Lädt ein Modell; weicht die Konfiguration von `expected` ab, ist das ein Konfigurationsfehler."""
    checkpoint = read_checkpoint(path)
    if expected is not None and checkpoint.model_config != expected:
        raise ConfigError(
            f"Checkpoint {path} wurde mit anderer Modellkonfiguration erstellt "
            f"({checkpoint.model_config} statt {expected})."
        )
    return checkpoint.to_model()
