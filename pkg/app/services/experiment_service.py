"""
Geschäftslogik der Experimente, gemeinsam genutzt von Kommandozeile und Report-Service.

Alle Ausgabedateien werden über `atomic_write_*` geschrieben: bei einem Fehler bleibt
keine halbe Datei zurück.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import re
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from app.audio.feature_cache import load_features, save_features
from app.compression.pipeline import compress_pipeline
from app.compression.size import size_from_checkpoint
from app.config import ExperimentConfig, cache_dir, runs_dir
from app.core.tensor import Tensor, no_grad
from app.data.dataset import SceneDataset, split_report
from app.data.manifest import load_real, write_manifest
from app.data.synthetic import generate_synthetic
from app.errors import ArgumentError, ConfigError, DataIOError
from app.helpers.io_helpers import atomic_write_text
from app.helpers.report_helpers import (
    format_compression_table,
    format_device_table,
    format_param_table,
    format_size,
    format_summary_row,
    summarize_reports,
)
from app.model.bcresnet import BCResNetASC, build
from app.model.checkpoint import decode_checkpoint, load_model, read_checkpoint, save_checkpoint
from app.model.inspection import ParamRow, ParamTable, count_params, receptive_field, stage_shapes
from app.model.normalization import export_domain_stats, fit_global_norm, format_stats_tsv
from app.training.trainer import EvalReport, evaluate, metrics_jsonl, train

logger = logging.getLogger(__name__)

_SAFE_NAME = re.compile(r"^[A-Za-z0-9_.-]+$")
# Stamm plus höchstens eine Endung, z.B. data.bcaf
_CACHE_NAME = re.compile(r"^[A-Za-z0-9_-]+(\.[A-Za-z0-9_-]+)?$")


def load_dataset(cfg: ExperimentConfig, seed: int, manifest: str | Path | None = None) -> SceneDataset:
    """Manifest, falls angegeben, sonst der synthetische Benchmark für `seed`."""
    if manifest is not None:
        return load_real(manifest, num_classes=cfg.model.num_classes)
    return generate_synthetic(seed, cfg.data, cfg.model.num_classes)


def prepare_model(cfg: ExperimentConfig, seed: int, dataset: SceneDataset) -> BCResNetASC:
    model = build(cfg.model, seed)
    global_norm = model.global_norm()
    if global_norm is not None:
        train_set = dataset.split("train")
        fit_global_norm(global_norm, [ex.features for ex in train_set])
    return model


def _write_json(path: Path, payload: Any) -> None:
    atomic_write_text(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def run_train(
    cfg: ExperimentConfig,
    seeds: Sequence[int],
    out: str | Path,
    manifest: str | Path | None = None,
) -> dict[str, Any]:
    """
    Ein Lauf je Seed; je Lauf final.bcra, best.bcra, metrics.jsonl, config.env und report.txt.

    Zusammenfassung (Mittelwert ± Std der besten Test-Genauigkeit je Gerät) in summary.txt/json.
    """
    if not seeds:
        raise ConfigError("Mindestens ein Seed wird benötigt.")
    out = Path(out)
    best_reports: list[EvalReport] = []
    rows = []
    for seed in seeds:
        run_dir = out / f"seed_{seed}"
        dataset = load_dataset(cfg, seed, manifest)
        model = prepare_model(cfg, seed, dataset)
        logger.info("Training Seed %d, ungesehene Geräte: %s", seed, ", ".join(split_report(dataset).unseen) or "-")
        result = train(model, dataset, cfg.train, cfg.augment, seed)

        meta = {"seed": seed, "best_epoch": result.best_epoch}
        save_checkpoint(run_dir / "final.bcra", model, meta=meta)
        model.load_state_dict(result.best_state)
        save_checkpoint(run_dir / "best.bcra", model, meta=meta)
        atomic_write_text(run_dir / "metrics.jsonl", metrics_jsonl(result.metrics))
        atomic_write_text(run_dir / "config.env", cfg.to_flat())
        if result.best_report is not None:
            best_reports.append(result.best_report)
            rows.append((f"seed {seed}", result.best_report))
            atomic_write_text(
                run_dir / "report.txt", format_device_table([(f"seed {seed}", result.best_report)]) + "\n"
            )

    summary = summarize_reports(best_reports) if best_reports else {}
    text = format_device_table(rows)
    if summary:
        text += "\n" + format_summary_row("mean ± std", summary)
    atomic_write_text(out / "summary.txt", text + "\n")
    payload = {
        "seeds": list(seeds),
        "norm_mode": cfg.model.norm_mode,
        "summary": {k: list(v) for k, v in summary.items()},
        "unseen": [r.unseen for r in best_reports],
    }
    _write_json(out / "summary.json", payload)
    payload["text"] = text
    return payload


def run_evaluate(
    cfg: ExperimentConfig, checkpoint: str | Path, seed: int, manifest: str | Path | None = None
) -> EvalReport:
    model = load_model(checkpoint, expected=cfg.model)
    dataset = load_dataset(cfg, seed, manifest)
    return evaluate(model, dataset.split("test"), cfg.train.eval_batch_size)


def run_compress(
    cfg: ExperimentConfig,
    checkpoint: str | Path,
    out: str | Path,
    seed: int,
    manifest: str | Path | None = None,
    teacher_path: str | Path | None = None,
) -> dict[str, Any]:
    """Vanilla-Auswertung, Kompression, komprimierter Checkpoint und Tabelle im Kompressionslayout."""
    out = Path(out)
    model = load_model(checkpoint, expected=cfg.model)
    teacher = None
    if teacher_path is not None:
        if cfg.compress.use_kd:
            teacher = load_model(teacher_path)
        else:
            logger.warning("Lehrermodell %s wird ignoriert, use_kd ist deaktiviert.", teacher_path)
    dataset = load_dataset(cfg, seed, manifest)
    test_set = dataset.split("test")
    vanilla = evaluate(model, test_set, cfg.train.eval_batch_size) if len(test_set) else None

    result = compress_pipeline(model, dataset, cfg, seed, teacher=teacher)
    meta = {
        "seed": seed,
        "prune_ratio": cfg.compress.prune_ratio,
        "kd": cfg.compress.use_kd,
        "conv_bits": cfg.compress.conv_bits,
    }
    target = save_checkpoint(out / "compressed.bcra", result.model, compressed=True, meta=meta)
    recount = size_from_checkpoint(read_checkpoint(target))

    table = format_compression_table(
        [
            ("Vanilla", "32", False, 0.0, vanilla.overall if vanilla else None),
            (
                "Compressed",
                f"{cfg.compress.conv_bits}/16",
                cfg.compress.use_kd,
                cfg.compress.prune_ratio,
                result.report.overall if result.report else None,
            ),
        ]
    )
    text = table + "\n" + format_size(recount)
    atomic_write_text(out / "metrics.jsonl", metrics_jsonl(result.training.metrics))
    atomic_write_text(out / "compress_report.txt", text + "\n")
    payload = {
        "vanilla": vanilla.to_dict() if vanilla else None,
        "compressed": result.report.to_dict() if result.report else None,
        "size": recount.to_dict(),
        "meta": meta,
    }
    _write_json(out / "compress_report.json", payload)
    payload["text"] = text
    return payload


def inspect_checkpoint(
    source: str | Path | bytes, input_shape: tuple[int, int, int, int] = (1, 1, 256, 330)
) -> dict[str, Any]:
    """Parameter-Tabelle, rezeptives Feld, Stufenformen und Grösse eines Checkpoints."""
    checkpoint = decode_checkpoint(source) if isinstance(source, bytes) else read_checkpoint(source)
    model = checkpoint.to_model()
    table = count_params(model)
    return {
        "model": dataclasses.asdict(checkpoint.model_config),
        "meta": checkpoint.meta,
        "compressed": checkpoint.compressed,
        "params": table.to_dict(),
        "receptive_field": list(receptive_field(model)),
        "receptive_field_pool_windows": list(receptive_field(model, pool_windows=True)),
        "stage_shapes": [[name, list(shape)] for name, shape in stage_shapes(model, input_shape)],
        "resnorm_placements": model.resnorm_placements(),
        "size": size_from_checkpoint(checkpoint).to_dict(),
    }


def format_inspect(report: dict[str, Any]) -> str:
    table = ParamTable([ParamRow(r["name"], r["count"], r["group"]) for r in report["params"]["rows"]])
    f_rf, t_rf = report["receptive_field"]
    lines = [format_param_table(table), f"RF {f_rf}×{t_rf}", "Stufen:"]
    lines.extend(f"  {name}\t{'×'.join(str(s) for s in shape)}" for name, shape in report["stage_shapes"])
    lines.append(f"ResNorm-Plätze: {report['resnorm_placements']}")
    size = report["size"]
    lines.append(f"Grösse: {size['kib']:.2f} KiB ({size['total_bytes']} B)")
    return "\n".join(lines)


def export_stats(
    cfg: ExperimentConfig,
    seed: int,
    out: str | Path,
    manifest: str | Path | None = None,
    checkpoint: str | Path | None = None,
    layer: str = "stem",
) -> tuple[Path, Path]:
    """
    Schreibt freq_stats.tsv (N × 2F) und chan_stats.tsv (N × 2C).

    Ohne Checkpoint werden die Eingangsmerkmale ausgewertet, sonst die Aktivierung `layer`.
    """
    dataset = load_dataset(cfg, seed, manifest)
    if len(dataset) == 0:
        raise ArgumentError("Keine Beispiele für die Statistik.")
    features = dataset.features()
    if checkpoint is not None:
        model = load_model(checkpoint)
        model.eval()
        chunks = []
        step = cfg.train.eval_batch_size
        with no_grad():
            for start in range(0, len(features), step):
                taps: dict[str, Tensor] = {}
                model(Tensor(features[start : start + step]), taps=taps)
                if layer not in taps:
                    raise ArgumentError(f"Unbekannte Schicht '{layer}', erlaubt: {', '.join(taps)}.")
                chunks.append(taps[layer].data)
        features = np.concatenate(chunks, axis=0)
    freq, chan = export_domain_stats(features)
    out = Path(out)
    ids = dataset.ids()
    freq_path = atomic_write_text(out / "freq_stats.tsv", format_stats_tsv(ids, freq))
    chan_path = atomic_write_text(out / "chan_stats.tsv", format_stats_tsv(ids, chan))
    return freq_path, chan_path


def generate_data(cfg: ExperimentConfig, seed: int, out: str | Path) -> tuple[Path, Path]:
    """Exportiert den synthetischen Datensatz als data.bcaf plus manifest.tsv."""
    out = Path(out)
    dataset = generate_synthetic(seed, cfg.data, cfg.model.num_classes)
    data_path = save_features(out / "data.bcaf", {ex.id: ex.features for ex in dataset})
    rows = [(f"data.bcaf#{ex.id}", ex.scene, ex.device, ex.split) for ex in dataset]
    manifest_path = write_manifest(out / "manifest.tsv", rows)
    logger.info("%d Beispiele nach %s geschrieben", len(dataset), out)
    return data_path, manifest_path


def read_metrics(run_id: str) -> list[dict[str, Any]]:
    """Liest metrics.jsonl eines Laufs unter BCRA_RUNS_DIR."""
    if not _SAFE_NAME.match(run_id) or run_id in (".", ".."):
        raise ValueError(f"Ungültige Lauf-ID '{run_id}'.")
    path = runs_dir() / run_id / "metrics.jsonl"
    if not path.exists():
        raise DataIOError(f"Lauf nicht gefunden: {run_id}")
    return [json.loads(line) for line in path.read_text(encoding="utf-8").splitlines() if line.strip()]


def load_cached_feature(feature_id: str, cache_file: str = "data.bcaf") -> np.ndarray:
    """Sucht einen Merkmalsdatensatz in einer BCAF-Datei unter BCRA_CACHE_DIR."""
    if not _CACHE_NAME.match(cache_file):
        raise ValueError(f"Ungültiger Dateiname '{cache_file}'.")
    path = cache_dir() / cache_file
    features = load_features(path)
    if feature_id not in features:
        raise DataIOError(f"Merkmal '{feature_id}' nicht in {cache_file} gefunden.")
    return features[feature_id]
