import tempfile
import unittest
from pathlib import Path

import numpy as np
from scipy.io import wavfile

from app.audio.feature_cache import decode_features, encode_features, load_features, save_features
from app.audio.frontend import (
    MelConfig,
    Waveform,
    frame_count,
    global_freq_stats,
    logmel,
    mel_filterbank,
    read_wav,
    resample,
    waveform_to_features,
)
from app.errors import ArgumentError, DataIOError, FormatError, TooShortError


# ## Tests fuer das Resampling
class TestResample(unittest.TestCase):
    def test_ten_seconds_48k_to_16k(self):
        w = Waveform(np.zeros(480000, dtype=np.float32), 48000)
        out = resample(w, 16000)
        self.assertEqual(out.sample_rate, 16000)
        self.assertEqual(len(out.samples), 160000)

    def test_same_rate_is_identity(self):
        w = Waveform(np.ones(10, dtype=np.float32), 16000)
        self.assertIs(resample(w, 16000), w)

    def test_sine_survives_decimation(self):
        # **Gegeben:** 1-kHz-Sinus mit 48 kHz
        n = np.arange(48000)
        w = Waveform((0.5 * np.sin(2 * np.pi * 1000 * n / 48000)).astype(np.float32), 48000)
        # **Wenn:** auf 16 kHz dezimiert wird
        out = resample(w, 16000)
        # **Dann:** entspricht das Ergebnis nach dem Einschwingen dem 16-kHz-Sinus
        m = np.arange(len(out.samples))
        expected = 0.5 * np.sin(2 * np.pi * 1000 * m / 16000)
        settled = slice(500, len(m) - 500)
        self.assertLess(np.max(np.abs(out.samples[settled] - expected[settled])), 1e-3)

    def test_non_integer_ratio_rejected(self):
        with self.assertRaises(ArgumentError):
            resample(Waveform(np.zeros(100, dtype=np.float32), 44100), 16000)

    def test_upsampling_rejected(self):
        with self.assertRaises(ArgumentError):
            resample(Waveform(np.zeros(100, dtype=np.float32), 16000), 48000)


# ## Tests fuer logmel
class TestLogMel(unittest.TestCase):
    def test_ten_seconds_give_330_frames(self):
        rng = np.random.default_rng(0)
        w = Waveform(rng.uniform(-0.1, 0.1, 160000).astype(np.float32), 16000)
        features = logmel(w)
        self.assertEqual(features.shape, (1, 1, 256, 330))
        self.assertEqual(features.dtype, np.float32)

    def test_silence_hits_floor(self):
        features = logmel(Waveform(np.zeros(4000, dtype=np.float32), 16000))
        np.testing.assert_allclose(features, np.float32(np.log(1e-10)), rtol=1e-6)

    def test_single_window_gives_one_frame(self):
        features = logmel(Waveform(np.zeros(2080, dtype=np.float32), 16000))
        self.assertEqual(features.shape[-1], 1)

    def test_too_short(self):
        with self.assertRaises(TooShortError):
            logmel(Waveform(np.zeros(2079, dtype=np.float32), 16000))

    def test_wrong_rate_rejected(self):
        with self.assertRaises(ArgumentError):
            logmel(Waveform(np.zeros(8000, dtype=np.float32), 48000))

    def test_frame_count_matches_loop(self):
        cfg = MelConfig()
        for length in (2080, 2081, 2559, 2560, 9999, 160000):
            with self.subTest(length=length):
                counted, start = 0, 0
                while start + cfg.win_samples <= length:
                    counted += 1
                    start += cfg.hop_samples
                self.assertEqual(frame_count(length, cfg), counted)

    def test_gain_adds_constant(self):
        # **Gegeben:** Rauschen und dasselbe Rauschen mit Faktor 3
        rng = np.random.default_rng(1)
        samples = rng.uniform(-0.2, 0.2, 8000)
        quiet = logmel(Waveform(samples.astype(np.float32), 16000))
        loud = logmel(Waveform((3.0 * samples).astype(np.float32), 16000))
        # **Dann:** energiereiche Bänder verschieben sich um 2·ln 3
        high = quiet > -12
        self.assertTrue(high.any())
        np.testing.assert_allclose(loud[high] - quiet[high], 2 * np.log(3.0), atol=1e-3)

    def test_filterbank_shape_and_weights(self):
        bank = mel_filterbank(MelConfig())
        self.assertEqual(bank.shape, (256, 2049))
        self.assertTrue((bank >= 0).all())
        self.assertTrue((bank.sum(axis=0) <= 1.0).all())

    def test_fft_smaller_than_window_rejected(self):
        with self.assertRaises(ArgumentError):
            MelConfig(fft_size=2048)


# ## Tests fuer die globale Frequenzstatistik
class TestGlobalFreqStats(unittest.TestCase):
    def test_constant_map(self):
        mean, std = global_freq_stats([np.full((1, 1, 3, 4), 2.5)])
        np.testing.assert_allclose(mean, 2.5)
        np.testing.assert_allclose(std, 1e-5)

    def test_two_point_statistics(self):
        mean, std = global_freq_stats([np.zeros((1, 1, 3, 4)), np.full((1, 1, 3, 4), 2.0)])
        np.testing.assert_allclose(mean, 1.0)
        np.testing.assert_allclose(std, 1.0)

    def test_standardizes_own_dataset(self):
        rng = np.random.default_rng(2)
        data = [rng.normal(5.0, 3.0, (1, 1, 6, 10)) for _ in range(4)]
        mean, std = global_freq_stats(data)
        pooled = np.concatenate([(d - mean[:, None]) / std[:, None] for d in data], axis=-1)
        np.testing.assert_allclose(pooled.mean(axis=(0, 1, 3)), 0.0, atol=1e-5)

    def test_empty_dataset(self):
        with self.assertRaises(ArgumentError):
            global_freq_stats([])


# ## Tests fuer WAV-Eingabe und den Merkmals-Cache
class TestFilesAndCache(unittest.TestCase):
    def setUp(self) -> None:
        self._tmp = tempfile.TemporaryDirectory()
        self.tmp = Path(self._tmp.name)

    def tearDown(self) -> None:
        self._tmp.cleanup()

    def test_read_wav_scales_pcm(self):
        path = self.tmp / "a.wav"
        wavfile.write(path, 16000, np.array([0, 16384, -32768], dtype=np.int16))
        w = read_wav(path)
        np.testing.assert_allclose(w.samples, [0.0, 0.5, -1.0])
        self.assertEqual(w.sample_rate, 16000)

    def test_read_wav_rejects_stereo_and_float(self):
        stereo = self.tmp / "stereo.wav"
        wavfile.write(stereo, 16000, np.zeros((10, 2), dtype=np.int16))
        floats = self.tmp / "float.wav"
        wavfile.write(floats, 16000, np.zeros(10, dtype=np.float32))
        for path in (stereo, floats):
            with self.subTest(path=path.name):
                with self.assertRaises(FormatError):
                    read_wav(path)

    def test_read_wav_missing_and_garbage(self):
        with self.assertRaises(DataIOError):
            read_wav(self.tmp / "fehlt.wav")
        garbage = self.tmp / "garbage.wav"
        garbage.write_bytes(b"garbage-bytes-not-a-wave-file")
        with self.assertRaises(FormatError):
            read_wav(garbage)

    def test_waveform_to_features_full_path(self):
        path = self.tmp / "clip.wav"
        rng = np.random.default_rng(3)
        wavfile.write(path, 48000, (rng.uniform(-0.3, 0.3, 48000) * 32767).astype(np.int16))
        features = waveform_to_features(path)
        self.assertEqual(features.shape, (1, 1, 256, frame_count(16000, MelConfig())))

    def test_cache_preserves_ids_and_values(self):
        # **Gegeben:** zwei Merkmalskarten
        data = {"b-1": np.arange(6.0).reshape(2, 3), "a-2": np.ones((1, 1, 3, 2))}
        # **Wenn:** sie gespeichert und geladen werden
        path = save_features(self.tmp / "x.bcaf", data)
        loaded = load_features(path)
        # **Dann:** Reihenfolge, Form und Werte bleiben erhalten
        self.assertEqual(list(loaded), ["b-1", "a-2"])
        self.assertEqual(loaded["b-1"].shape, (1, 1, 2, 3))
        np.testing.assert_array_equal(loaded["b-1"][0, 0], data["b-1"])

    def test_cache_corruption_reports_offset(self):
        payload = encode_features({"x": np.ones((2, 2))})
        with self.assertRaises(FormatError) as ctx:
            decode_features(b"XXXX" + payload[4:])
        self.assertEqual(ctx.exception.offset, 0)
        with self.assertRaises(FormatError) as ctx:
            decode_features(payload[:-3])
        self.assertIsNotNone(ctx.exception.offset)
        with self.assertRaises(FormatError):
            decode_features(payload + b"\x00")

    def test_cache_missing_file(self):
        with self.assertRaises(DataIOError):
            load_features(self.tmp / "fehlt.bcaf")


if __name__ == "__main__":
    unittest.main()
