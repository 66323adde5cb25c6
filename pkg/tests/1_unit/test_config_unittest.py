import os
import tempfile
import unittest
from pathlib import Path
from unittest.mock import patch

from app.config import (
    AugmentConfig,
    CompressConfig,
    DataConfig,
    ExperimentConfig,
    ModelConfig,
    TrainConfig,
    cache_dir,
    log_level,
    runs_dir,
)
from app.errors import ArgumentError, ConfigError, DataIOError, FormatError, NumericalError, exit_code_for


# ## Tests fuer die Experimentkonfiguration
class TestExperimentConfig(unittest.TestCase):
    def test_defaults(self):
        cfg = ExperimentConfig()
        self.assertEqual(cfg.train.peak_lr, 0.06)
        self.assertEqual(cfg.train.batch_size, 64)
        self.assertEqual(cfg.train.warmup_epochs, 5)
        self.assertEqual(cfg.model.resnorm_lambda, 0.1)
        self.assertEqual(cfg.compress.prune_ratio, 0.89)
        self.assertEqual(cfg.augment.roll_max_frames, 50)
        self.assertEqual(cfg.data.train_sizes["A"], 600)

    def test_string_values_are_coerced(self):
        # **Gegeben:** Werte wie aus einer key=value-Datei
        cfg = ExperimentConfig.from_mapping(
            {
                "epochs": "3",
                "warmup_epochs": "1",
                "peak_lr": "0.01",
                "use_kd": "true",
                "train_sizes": "A:5,B:1",
                "teacher_checkpoint": "",
                "norm_mode": "freqin",
            }
        )
        # **Dann:** landen sie typisiert im passenden Abschnitt
        self.assertEqual(cfg.train.epochs, 3)
        self.assertEqual(cfg.train.warmup_epochs, 1)
        self.assertEqual(cfg.train.peak_lr, 0.01)
        self.assertTrue(cfg.compress.use_kd)
        self.assertEqual(cfg.data.train_sizes, {"A": 5, "B": 1})
        self.assertIsNone(cfg.train.teacher_checkpoint)
        self.assertEqual(cfg.model.norm_mode, "freqin")

    def test_unknown_key(self):
        with self.assertRaises(ConfigError) as ctx:
            ExperimentConfig.from_mapping({"learning_rate": "0.1"})
        self.assertIn("learning_rate", str(ctx.exception))

    def test_invalid_values(self):
        cases = [
            {"epochs": "drei"},
            {"use_kd": "vielleicht"},
            {"norm_mode": "layer"},
            {"prune_ratio": "1.0"},
            {"train_sizes": "X:3"},
            {"kd_weight": "2"},
        ]
        for values in cases:
            with self.subTest(values=values):
                with self.assertRaises(ConfigError):
                    ExperimentConfig.from_mapping(values)

    def test_flat_file_round_trip(self):
        # **Gegeben:** eine vollständig geänderte Konfiguration
        cfg = ExperimentConfig(
            model=ModelConfig(base_channels=4, norm_mode="input", dropout=0.0),
            train=TrainConfig(epochs=7, warmup_epochs=2, teacher_checkpoint="runs/t.bcra"),
            augment=AugmentConfig(specaugment_enabled=True, mixup_alpha=0.5),
            data=DataConfig(train_sizes={"A": 10, "B": 2}, synth_frames=32),
            compress=CompressConfig(prune_ratio=0.5, use_kd=True),
        )
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "exp.env"
            path.write_text(cfg.to_flat(), encoding="utf-8")
            # **Wenn:** sie wieder eingelesen wird
            loaded = ExperimentConfig.from_file(path)
        # **Dann:** ist sie identisch
        self.assertEqual(loaded, cfg)

    def test_missing_file(self):
        with self.assertRaises(ConfigError):
            ExperimentConfig.from_file("/nicht/vorhanden.env")
        self.assertEqual(ExperimentConfig.from_file(None), ExperimentConfig())

    def test_environment_overrides(self):
        with patch.dict(os.environ, {"BCRA_LOG_LEVEL": "debug", "BCRA_CACHE_DIR": "/tmp/c", "BCRA_RUNS_DIR": "/tmp/r"}):
            self.assertEqual(log_level(), "DEBUG")
            self.assertEqual(cache_dir(), Path("/tmp/c"))
            self.assertEqual(runs_dir(), Path("/tmp/r"))


# ## Tests fuer die Exit-Codes
class TestExitCodes(unittest.TestCase):
    def test_codes_per_error(self):
        cases = [
            (ArgumentError("x"), 1),
            (ConfigError("x"), 2),
            (FormatError("x", 3), 3),
            (DataIOError("x"), 3),
            (FileNotFoundError("x"), 3),
            (NumericalError("x"), 4),
            (RuntimeError("x"), 1),
        ]
        for exc, code in cases:
            with self.subTest(exc=type(exc).__name__):
                self.assertEqual(exit_code_for(exc), code)

    def test_format_error_names_offset(self):
        self.assertEqual(str(FormatError("kaputt", 12)), "kaputt (Offset 12)")
        self.assertIsNone(FormatError("kaputt").offset)


if __name__ == "__main__":
    unittest.main()
