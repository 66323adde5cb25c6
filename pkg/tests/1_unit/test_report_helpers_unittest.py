import tempfile
import unittest
from collections import OrderedDict
from io import BytesIO
from pathlib import Path
from unittest.mock import patch

import numpy as np
from PIL import Image

from app.compression.size import SizeReport, SizeRow
from app.config import DEVICES
from app.helpers import io_helpers
from app.helpers.image_helpers import render_feature_png
from app.helpers.io_helpers import atomic_write_text
from app.helpers.report_helpers import (
    format_compression_table,
    format_device_table,
    format_param_table,
    format_size,
    format_summary_row,
    mean_std,
    summarize_reports,
)
from app.model.inspection import ParamRow, ParamTable
from app.training.trainer import EvalReport


def _report(values: dict[str, float], overall: float) -> EvalReport:
    per_device = OrderedDict((d, values.get(d)) for d in DEVICES)
    return EvalReport(per_device, overall)


# ## Tests fuer die Berichtstabellen
class TestReportHelpers(unittest.TestCase):
    def test_mean_std(self):
        self.assertEqual(mean_std([1.0, 3.0]), (2.0, 1.0))
        self.assertEqual(mean_std([5.0]), (5.0, 0.0))
        self.assertEqual(mean_std([None, None]), (None, None))
        self.assertEqual(mean_std([None, 4.0]), (4.0, 0.0))

    def test_device_table_columns(self):
        text = format_device_table([("seed_0", _report({"A": 75.0, "S4": 50.0}, 62.5))])
        header, row = text.splitlines()
        self.assertEqual(header.split("\t"), ["Modell", *DEVICES, "Overall"])
        cells = row.split("\t")
        self.assertEqual(cells[0], "seed_0")
        self.assertEqual(cells[1], "75.0")
        self.assertEqual(cells[2], "-")
        self.assertEqual(cells[-1], "62.5")

    def test_summary_over_seeds(self):
        # **Gegeben:** zwei Seeds mit 60 % bzw. 70 % auf Gerät A
        reports = [_report({"A": 60.0}, 60.0), _report({"A": 70.0}, 70.0)]
        # **Wenn:** zusammengefasst wird
        summary = summarize_reports(reports)
        # **Dann:** Mittelwert ± Standardabweichung je Spalte
        self.assertEqual(summary["A"], (65.0, 5.0))
        self.assertEqual(summary["B"], (None, None))
        row = format_summary_row("resnorm", summary)
        self.assertTrue(row.startswith("resnorm\t65.0 ± 5.0\t-"))

    def test_compression_table(self):
        text = format_compression_table(
            [("Vanilla", "32", False, None, 70.04), ("Compressed", "8/16", True, 0.89, 69.96)]
        )
        lines = text.splitlines()
        self.assertEqual(lines[0], "Method\tBitwidth\tKD\tPruning\tAccuracy")
        self.assertEqual(lines[1], "Vanilla\t32\tnein\t-\t70.0")
        self.assertEqual(lines[2], "Compressed\t8/16\tja\t0.89\t70.0")

    def test_size_line(self):
        size = SizeReport([SizeRow("w", "i8", 33035, 33035), SizeRow("b", "f16", 14810, 29620)])
        self.assertEqual(
            format_size(size), "Grösse: 61.19 KiB (62655 B = 33035 × 1 B Faltung + 14810 × 2 B weitere)"
        )

    def test_param_table(self):
        table = ParamTable([ParamRow("stem.weight", 4000, "conv"), ParamRow("stem_bn.weight", 160, "norm")])
        lines = format_param_table(table).splitlines()
        self.assertEqual(lines[1], "stem.weight\t4000\tconv")
        self.assertEqual(lines[-1], "#Param\t4160 (≈ 4.2k)\t")


# ## Tests fuer Bild- und Dateihelfer
class TestImageAndFiles(unittest.TestCase):
    def test_png_orientation_and_scale(self):
        # **Gegeben:** eine Karte, deren tiefstes Band am hellsten ist
        fmap = np.zeros((1, 1, 3, 4))
        fmap[0, 0, 0, :] = 1.0
        # **Wenn:** sie als PNG gerendert wird
        image = Image.open(BytesIO(render_feature_png(fmap, scale=2)))
        # **Dann:** liegt das tiefe Band unten und das Bild ist doppelt so gross
        self.assertEqual(image.size, (8, 6))
        pixels = np.asarray(image)
        self.assertEqual(int(pixels[-1, 0]), 255)
        self.assertEqual(int(pixels[0, 0]), 0)

    def test_constant_map_is_grey(self):
        image = Image.open(BytesIO(render_feature_png(np.full((2, 2), -5.0), scale=1)))
        self.assertTrue((np.asarray(image) == 128).all())

    def test_atomic_write_leaves_no_partial_file(self):
        with tempfile.TemporaryDirectory() as tmp:
            target = Path(tmp) / "sub" / "report.txt"
            atomic_write_text(target, "alt\n")
            with patch.object(io_helpers.os, "replace", side_effect=OSError("voll")):
                with self.assertRaises(OSError):
                    atomic_write_text(target, "neu\n")
            self.assertEqual(target.read_text(encoding="utf-8"), "alt\n")
            self.assertEqual(sorted(p.name for p in target.parent.iterdir()), ["report.txt"])


if __name__ == "__main__":
    unittest.main()
