"""E2E-Abnahmetests: Generalisierung auf ungesehene Geräte und Distillation im Kompressionsablauf."""

from __future__ import annotations

import os
import sys
import tempfile
import unittest
from pathlib import Path

import numpy as np

ROOT = Path(__file__).resolve().parents[2]
if str(ROOT) not in sys.path:
    sys.path.append(str(ROOT))

from app.config import ExperimentConfig  # noqa: E402
from app.services.experiment_service import run_compress, run_train  # noqa: E402

SEEDS = (0, 1, 2)

# ASC-1 auf dem synthetischen Geräte-Benchmark, verkleinert für NumPy
BASE = {
    "base_channels": "10",
    "epochs": "30",
    "warmup_epochs": "3",
    "batch_size": "32",
    "train_sizes": "A:300,B:25,C:25,S1:25,S2:25,S3:25",
    "test_per_device": "30",
    "synth_freq_bins": "32",
    "synth_frames": "32",
}


def _config(**overrides: str) -> ExperimentConfig:
    return ExperimentConfig.from_mapping({**BASE, **overrides})


@unittest.skipUnless(os.getenv("BCRA_SLOW_TESTS") == "1", "Langsame Abnahmetests: BCRA_SLOW_TESTS=1 setzen")
class GeneralizationAcceptanceTest(unittest.TestCase):
    @classmethod
    def setUpClass(cls) -> None:
        cls._tmp = tempfile.TemporaryDirectory()
        tmp = Path(cls._tmp.name)
        cls.summaries = {
            mode: run_train(_config(norm_mode=mode), SEEDS, tmp / mode) for mode in ("resnorm", "freqin", "none")
        }

    @classmethod
    def tearDownClass(cls) -> None:
        cls._tmp.cleanup()

    def _unseen(self, mode: str) -> float:
        return float(np.mean(self.summaries[mode]["unseen"]))

    def _device_a(self, mode: str) -> float:
        return self.summaries[mode]["summary"]["A"][0]

    def test_resnorm_beats_no_norm_on_unseen_devices(self):
        # **Gegeben:** gepaarte Seeds, identische Daten und Modelle bis auf die Normalisierung
        # **Dann:** liegt ResNorm auf S4–S6 im Mittel mindestens 3 Punkte vorn
        self.assertGreaterEqual(self._unseen("resnorm"), self._unseen("none") + 3.0)

    def test_freqin_ordering(self):
        self.assertGreaterEqual(self._unseen("freqin"), self._unseen("none"))
        self.assertLessEqual(self._device_a("freqin"), self._device_a("resnorm"))


@unittest.skipUnless(os.getenv("BCRA_SLOW_TESTS") == "1", "Langsame Abnahmetests: BCRA_SLOW_TESTS=1 setzen")
class DistillationAcceptanceTest(unittest.TestCase):
    def test_kd_does_not_hurt_compressed_model(self):
        with tempfile.TemporaryDirectory() as tmp_name:
            tmp = Path(tmp_name)
            # **Gegeben:** je Seed ein vortrainiertes Modell und ein breiterer Lehrer
            run_train(_config(), SEEDS, tmp / "student")
            run_train(_config(base_channels="20"), SEEDS, tmp / "teacher")
            plain, distilled = [], []
            for seed in SEEDS:
                checkpoint = tmp / "student" / f"seed_{seed}" / "best.bcra"
                teacher = tmp / "teacher" / f"seed_{seed}" / "best.bcra"
                # **Wenn:** mit und ohne Distillation komprimiert wird
                without = run_compress(_config(finetune_epochs="10"), checkpoint, tmp / f"plain_{seed}", seed)
                with_kd = run_compress(
                    _config(finetune_epochs="10", use_kd="true"), checkpoint, tmp / f"kd_{seed}", seed,
                    teacher_path=teacher,
                )
                plain.append(without["compressed"]["overall"])
                distilled.append(with_kd["compressed"]["overall"])
            # **Dann:** ist das destillierte Modell höchstens 0.5 Punkte schwächer
            self.assertGreaterEqual(float(np.mean(distilled)), float(np.mean(plain)) - 0.5)


if __name__ == "__main__":
    unittest.main()
