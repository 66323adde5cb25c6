import unittest
from collections import OrderedDict

import numpy as np

from app.compression.pipeline import compress_pipeline, compression_hook, materialize
from app.compression.pruning import global_magnitude_masks, prune
from app.compression.quantization import dequantize, fake_half, fake_quant, quantize_symmetric
from app.compression.size import size_report
from app.config import CompressConfig, DataConfig, ExperimentConfig, ModelConfig, TrainConfig
from app.core.tensor import Tensor, no_grad
from app.data.synthetic import generate_synthetic
from app.errors import ArgumentError, ConfigError
from app.model.bcresnet import build
from app.model.checkpoint import decode_checkpoint, encode_checkpoint
from app.model.layers import Identity

TINY_SIZES = {"A": 8, "B": 2, "C": 2, "S1": 2, "S2": 2, "S3": 2, "S4": 0, "S5": 0, "S6": 0}


def _tiny_config(**compress) -> ExperimentConfig:
    return ExperimentConfig(
        model=ModelConfig(base_channels=2),
        train=TrainConfig(epochs=1, warmup_epochs=0, batch_size=8),
        data=DataConfig(train_sizes=TINY_SIZES, test_per_device=1, synth_freq_bins=32, synth_frames=16),
        compress=CompressConfig(**{"finetune_epochs": 1, "prune_ratio": 0.5, **compress}),
    )


# ## Tests fuer die symmetrische Quantisierung
class TestQuantization(unittest.TestCase):
    def test_documented_example(self):
        # **Gegeben:** w = [−0.5, 0.25, 0.1]
        q, scale = quantize_symmetric(np.array([-0.5, 0.25, 0.1]))
        # **Dann:** max|w| wird auf −127 abgebildet, 0.25 rundet auf 64
        self.assertEqual(q[0], -127)
        self.assertEqual(q[1], 64)
        self.assertEqual(q.dtype, np.int8)
        self.assertAlmostEqual(float(scale), 0.5 / 127, places=6)
        self.assertAlmostEqual(float(dequantize(q, scale)[1]), 0.25197, places=4)

    def test_zero_tensor(self):
        q, scale = quantize_symmetric(np.zeros((3, 3)))
        np.testing.assert_array_equal(q, 0)
        self.assertEqual(scale, 1.0)
        np.testing.assert_array_equal(fake_quant(Tensor(np.zeros(4))).data, 0.0)

    def test_idempotent(self):
        for seed in range(5):
            with self.subTest(seed=seed):
                w = Tensor(np.random.default_rng(seed).standard_normal((8, 4, 3, 3)))
                once = fake_quant(w)
                np.testing.assert_array_equal(fake_quant(once).data, once.data)

    def test_error_and_level_bounds(self):
        w = np.random.default_rng(1).standard_normal(5000).astype(np.float32)
        q, scale = quantize_symmetric(w)
        restored = dequantize(q, scale)
        self.assertLessEqual(len(np.unique(restored)), 255)
        self.assertLessEqual(np.abs(restored - w).max(), float(scale) / 2 + 1e-7)

    def test_only_eight_bits(self):
        with self.assertRaises(ArgumentError):
            quantize_symmetric(np.ones(3), bits=4)
        with self.assertRaises(ArgumentError):
            fake_quant(Tensor(np.ones(3)), bits=16)

    def test_straight_through_gradient(self):
        w = Tensor(np.array([0.3, -1.2, 0.01]), requires_grad=True)
        (fake_quant(w) * Tensor(np.array([1.0, 2.0, 3.0]))).sum().backward()
        np.testing.assert_array_equal(w.grad, [1.0, 2.0, 3.0])

    def test_fake_half_matches_binary16(self):
        x = Tensor(np.array([0.1, 1.0 / 3.0, 70000.0 / 7.0], dtype=np.float32), requires_grad=True)
        out = fake_half(x)
        np.testing.assert_array_equal(out.data, x.data.astype(np.float16).astype(np.float32))
        out.sum().backward()
        np.testing.assert_array_equal(x.grad, 1.0)


# ## Tests fuer das Magnituden-Pruning
class TestPruning(unittest.TestCase):
    def test_documented_example(self):
        masks = global_magnitude_masks({"w": np.array([0.1, -0.9, 0.05, 0.7])}, 0.5)
        np.testing.assert_array_equal(masks["w"], [0, 1, 0, 1])

    def test_ratio_zero_keeps_everything(self):
        model = build(ModelConfig(base_channels=2), seed=0)
        before = model.state_dict()
        state = prune(model, 0.0)
        self.assertEqual(state.nonzero, state.total)
        for name, tensor in model.named_parameters():
            np.testing.assert_array_equal(tensor.data, before[name])

    def test_invalid_ratio(self):
        for ratio in (1.0, 1.5, -0.1):
            with self.subTest(ratio=ratio):
                with self.assertRaises(ArgumentError):
                    global_magnitude_masks({"w": np.ones(4)}, ratio)

    def test_global_threshold_against_full_sort(self):
        # **Gegeben:** mehrere Tensoren unterschiedlicher Grösse
        rng = np.random.default_rng(2)
        weights = OrderedDict(
            (name, rng.standard_normal(shape)) for name, shape in (("a", (4, 3)), ("b", (7,)), ("c", (2, 2, 5)))
        )
        for ratio in (0.1, 0.5, 0.89):
            with self.subTest(ratio=ratio):
                # **Wenn:** global gepruned wird
                masks = global_magnitude_masks(weights, ratio)
                kept = np.concatenate([np.abs(weights[n][masks[n] > 0]) for n in weights])
                dropped = np.concatenate([np.abs(weights[n][masks[n] == 0]) for n in weights])
                # **Dann:** exakt round((1−r)·N) behalten, alle behaltenen ≥ alle entfernten
                self.assertEqual(kept.size, round((1 - ratio) * 39))
                self.assertGreaterEqual(kept.min(), dropped.max())
                ordered = np.sort(np.concatenate([np.abs(w).reshape(-1) for w in weights.values()]))
                np.testing.assert_array_equal(np.sort(kept), ordered[ordered.size - kept.size :])

    def test_prune_zeroes_model_weights(self):
        model = build(ModelConfig(base_channels=2), seed=1)
        state = prune(model, 0.6)
        params = dict(model.named_parameters())
        for name, mask in state.masks.items():
            with self.subTest(name=name):
                np.testing.assert_array_equal(params[name].data[mask == 0], 0.0)
        self.assertNotIn("stem.bias", state.masks)


# ## Tests fuer die Groessenbilanz
class TestSize(unittest.TestCase):
    def test_uncompressed_asc8_in_f32(self):
        report = size_report(build(ModelConfig(base_channels=80), seed=0))
        self.assertEqual(report.total_bytes, 4 * 315130)

    def test_asc8_after_pruning(self):
        # **Gegeben:** ASC-8 mit globalem Pruning 0.89
        model = build(ModelConfig(base_channels=80), seed=0)
        state = prune(model, 0.89)
        report = size_report(model, state)
        # **Dann:** 33'035 Faltungsgewichte à 1 Byte und 14'810 weitere à 2 Byte
        self.assertEqual(report.conv_nonzero, 33035)
        self.assertEqual(report.other_params, 14810)
        self.assertEqual(report.total_bytes, 62655)
        self.assertAlmostEqual(report.kib, 61.19, places=2)

    def test_empty_model(self):
        self.assertEqual(size_report(Identity()).total_bytes, 0)


# ## Tests fuer den Kompressionsablauf
class TestPipeline(unittest.TestCase):
    def test_materialized_model_matches_training_graph(self):
        # **Gegeben:** ein gepruntes Modell mit aktivem Fake-Quant-Hook
        model = build(ModelConfig(base_channels=2), seed=4)
        rng = np.random.default_rng(0)
        model(Tensor(rng.standard_normal((4, 1, 32, 20))), rng=rng)
        state = prune(model, 0.5)
        model.eval()
        x = Tensor(np.random.default_rng(1).standard_normal((3, 1, 32, 20)))
        model.install_param_hook(compression_hook(state))
        with no_grad():
            graph = model(x).data
        # **Wenn:** die Werte übernommen und als i8/f16 gespeichert werden
        materialize(model, state)
        loaded = decode_checkpoint(encode_checkpoint(model, compressed=True)).to_model()
        with no_grad():
            direct = model(x).data
            restored = loaded(x).data
        # **Dann:** liefern alle drei Wege dieselben Logits
        np.testing.assert_array_equal(direct, graph)
        np.testing.assert_allclose(restored, graph, rtol=0, atol=1e-6)

    def test_kd_without_teacher(self):
        cfg = _tiny_config(use_kd=True)
        model = build(cfg.model, seed=0)
        dataset = generate_synthetic(0, cfg.data)
        with self.assertRaises(ConfigError):
            compress_pipeline(model, dataset, cfg, seed=0)

    def test_masks_survive_finetuning(self):
        cfg = _tiny_config()
        dataset = generate_synthetic(0, cfg.data)
        model = build(cfg.model, seed=0)
        result = compress_pipeline(model, dataset, cfg, seed=0)
        params = dict(result.model.named_parameters())
        for name, mask in result.state.masks.items():
            with self.subTest(name=name):
                np.testing.assert_array_equal(params[name].data[mask == 0], 0.0)
        self.assertLessEqual(result.size.conv_nonzero, result.state.nonzero)
        self.assertFalse(result.model.training)
        self.assertIsNotNone(result.report)

    def test_pipeline_with_teacher(self):
        cfg = _tiny_config(use_kd=True)
        dataset = generate_synthetic(1, cfg.data)
        teacher = build(cfg.model, seed=9).eval()
        result = compress_pipeline(build(cfg.model, seed=1), dataset, cfg, seed=1, teacher=teacher)
        self.assertEqual(len(result.training.metrics), 1)


if __name__ == "__main__":
    unittest.main()
