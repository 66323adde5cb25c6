"""
Kommandozeile für Experimente: train, evaluate, compress, inspect, generate-data, export-stats, serve.

Exit-Codes: 0 Erfolg, 1 ungültige Argumente, 2 Konfigurationsfehler, 3 E/A-Fehler, 4 numerischer Fehler.
Alle Zufallszahlen hängen nur von --seed bzw. --seeds ab.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

from app.config import ExperimentConfig, log_level
from app.errors import exit_code_for
from app.helpers.io_helpers import atomic_write_text
from app.helpers.report_helpers import format_device_table
from app.services import experiment_service as service

logger = logging.getLogger("app.cli")


def _add_common(parser: argparse.ArgumentParser, *, seed: bool = True, manifest: bool = True) -> None:
    parser.add_argument("--config", help="Flache key=value-Konfigurationsdatei")
    if seed:
        parser.add_argument("--seed", type=int, default=0)
    if manifest:
        parser.add_argument("--manifest", help="TSV-Manifest statt des synthetischen Datensatzes")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bcra", description="BC-ResNet-ASC mit ResNorm")
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="Modell je Seed trainieren")
    _add_common(train, seed=False)
    train.add_argument("--seeds", type=int, nargs="+", default=[0])
    train.add_argument("--out", required=True)

    evaluate = sub.add_parser("evaluate", help="Checkpoint je Gerät auswerten")
    _add_common(evaluate)
    evaluate.add_argument("--checkpoint", required=True)
    evaluate.add_argument("--out", help="Optional: Bericht als report.json ablegen")

    compress = sub.add_parser("compress", help="Pruning, Quantisierung und Nachtraining")
    _add_common(compress)
    compress.add_argument("--checkpoint", required=True)
    compress.add_argument("--out", required=True)
    compress.add_argument("--teacher", help="Lehrer-Checkpoint für die Distillation")

    inspect = sub.add_parser("inspect", help="Parameter, rezeptives Feld und Stufenformen")
    inspect.add_argument("--checkpoint", required=True)
    inspect.add_argument("--out", help="Optional: inspect.txt und inspect.json ablegen")
    inspect.add_argument("--freq-bins", type=int, default=256)
    inspect.add_argument("--frames", type=int, default=330)

    generate = sub.add_parser("generate-data", help="Synthetischen Datensatz als BCAF + Manifest exportieren")
    _add_common(generate, manifest=False)
    generate.add_argument("--out", required=True)

    stats = sub.add_parser("export-stats", help="Frequenz- und Kanalstatistik je Beispiel exportieren")
    _add_common(stats)
    stats.add_argument("--out", required=True)
    stats.add_argument("--checkpoint", help="Statistik einer Aktivierung statt der Eingangsmerkmale")
    stats.add_argument("--layer", default="stem")

    serve = sub.add_parser("serve", help="Report-Service starten")
    serve.add_argument("--port", type=int)
    return parser


def _run(args: argparse.Namespace) -> None:
    if args.command == "serve":
        from app.main import serve

        serve(args.port)
        return

    if args.command == "inspect":
        report = service.inspect_checkpoint(Path(args.checkpoint), (1, 1, args.freq_bins, args.frames))
        text = service.format_inspect(report)
        if args.out:
            out = Path(args.out)
            atomic_write_text(out / "inspect.txt", text + "\n")
            atomic_write_text(out / "inspect.json", json.dumps(report, indent=2, sort_keys=True) + "\n")
        print(text)
        return

    cfg = ExperimentConfig.from_file(args.config)
    if args.command == "train":
        summary = service.run_train(cfg, args.seeds, args.out, args.manifest)
        print(summary["text"])
    elif args.command == "evaluate":
        report = service.run_evaluate(cfg, args.checkpoint, args.seed, args.manifest)
        if args.out:
            atomic_write_text(
                Path(args.out) / "report.json", json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n"
            )
        print(format_device_table([(Path(args.checkpoint).stem, report)]))
    elif args.command == "compress":
        teacher = args.teacher or cfg.train.teacher_checkpoint
        result = service.run_compress(cfg, args.checkpoint, args.out, args.seed, args.manifest, teacher)
        print(result["text"])
    elif args.command == "generate-data":
        data_path, manifest_path = service.generate_data(cfg, args.seed, args.out)
        print(f"{data_path}\n{manifest_path}")
    elif args.command == "export-stats":
        freq_path, chan_path = service.export_stats(
            cfg, args.seed, args.out, args.manifest, args.checkpoint, args.layer
        )
        print(f"{freq_path}\n{chan_path}")


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=log_level(), format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        _run(args)
    except Exception as exc:
        logger.error("%s: %s", type(exc).__name__, exc)
        logger.debug("Details", exc_info=True)
        return exit_code_for(exc)
    return 0


if __name__ == "__main__":
    sys.exit(main())
