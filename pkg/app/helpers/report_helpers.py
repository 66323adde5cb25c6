"""Hilfsfunktionen zur Textausgabe der Berichte (Geräte-Tabelle, Kompressionstabelle, Parameter)."""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

from app.compression.size import SizeReport
from app.model.inspection import ParamTable
from app.training.trainer import REPORT_COLUMNS, EvalReport

COMPRESSION_COLUMNS = ("Method", "Bitwidth", "KD", "Pruning", "Accuracy")


def _cell(value: float | None) -> str:
    return "-" if value is None else f"{value:.1f}"


def mean_std(values: Sequence[float | None]) -> tuple[float | None, float | None]:
    """Mittelwert und Populations-Standardabweichung; ein einzelner Wert hat Std 0."""
    present = [v for v in values if v is not None]
    if not present:
        return None, None
    return float(np.mean(present)), float(np.std(present))


def summarize_reports(reports: Sequence[EvalReport]) -> dict[str, tuple[float | None, float | None]]:
    """Je Spalte (A … S6, Overall) Mittelwert ± Std über mehrere Seeds."""
    summary = {}
    for index, column in enumerate(REPORT_COLUMNS):
        summary[column] = mean_std([r.row()[index] for r in reports])
    return summary


def format_device_table(rows: Iterable[tuple[str, EvalReport]]) -> str:
    header = "\t".join(("Modell", *REPORT_COLUMNS))
    lines = [header]
    for label, report in rows:
        lines.append("\t".join((label, *(_cell(v) for v in report.row()))))
    return "\n".join(lines)


def format_summary_row(label: str, summary: dict[str, tuple[float | None, float | None]]) -> str:
    cells = []
    for column in REPORT_COLUMNS:
        mean, std = summary[column]
        cells.append("-" if mean is None else f"{mean:.1f} ± {std:.1f}")
    return "\t".join((label, *cells))


def format_compression_table(rows: Iterable[tuple[str, str, bool, float | None, float | None]]) -> str:
    """Zeilen (Methode, Bitbreite, KD, Pruning-Anteil, Genauigkeit)."""
    lines = ["\t".join(COMPRESSION_COLUMNS)]
    for method, bitwidth, kd, pruning, accuracy in rows:
        lines.append(
            "\t".join(
                (
                    method,
                    bitwidth,
                    "ja" if kd else "nein",
                    "-" if not pruning else f"{pruning:.2f}",
                    _cell(accuracy),
                )
            )
        )
    return "\n".join(lines)


def format_size(size: SizeReport) -> str:
    return (
        f"Grösse: {size.kib:.2f} KiB ({size.total_bytes} B = "
        f"{size.conv_nonzero} × 1 B Faltung + {size.other_params} × 2 B weitere)"
    )


def _k(count: int) -> str:
    return f"{count / 1000:.1f}k" if count >= 1000 else str(count)


def format_param_table(table: ParamTable) -> str:
    lines = ["Parameter\tAnzahl\tGruppe"]
    lines.extend(f"{r.name}\t{r.count}\t{r.group}" for r in table.rows)
    lines.append(f"conv gesamt\t{table.conv}\t")
    lines.append(f"norm gesamt\t{table.norm}\t")
    lines.append(f"#Param\t{table.total} (≈ {_k(table.total)})\t")
    return "\n".join(lines)
