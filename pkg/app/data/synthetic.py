"""
Synthetischer Geräteverschiebungs-Benchmark im Log-Mel-Raum.

Jede Klasse ist eine Spektro-Temporal-Vorlage (Bandbuckel mit klassentypischer
Zeitmodulation). Ein Beispiel ist Vorlage + Inhaltsrauschen, anschliessend durch das
Geräteprofil y = a_f·x + b_f + Rauschen abgebildet. Gerät A ist die Identität; alle
anderen Geräte haben glatte Verstärkungskurven a_f ∈ [0.5, 2] (Spline im Log-Bereich),
deren Seed nur vom Geräte-Token abhängt.
"""

from __future__ import annotations

import logging
import zlib
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from app.config import DEVICES, UNSEEN_DEVICES, DataConfig
from app.data.dataset import SceneDataset, SceneExample
from app.errors import ConfigError

logger = logging.getLogger(__name__)

GAIN_RANGE = (0.5, 2.0)
OFFSET_RANGE = (-1.0, 1.0)
_SPLINE_KNOTS = 6


@dataclass(frozen=True)
class DeviceProfile:
    device: str
    gain: np.ndarray = field(repr=False)
    offset: np.ndarray = field(repr=False)
    noise: float = 0.0

    def apply(self, clean: np.ndarray, rng: np.random.Generator | None = None) -> np.ndarray:
        """Bildet (…, F, T)-Merkmale durch das Gerät ab."""
        out = clean * self.gain[:, None] + self.offset[:, None]
        if self.noise and rng is not None:
            out = out + self.noise * rng.standard_normal(clean.shape)
        return out

    def invert(self, recorded: np.ndarray) -> np.ndarray:
        return (recorded - self.offset[:, None]) / self.gain[:, None]

    def scaled(self, factor: np.ndarray) -> "DeviceProfile":
        """Profil mit zusätzlich multiplizierten Verstärkungen (für Invarianzprüfungen)."""
        return DeviceProfile(self.device, self.gain * np.asarray(factor), self.offset, self.noise)


def _smooth_curve(rng: np.random.Generator, n_freq: int, low: float, high: float) -> np.ndarray:
    knots_x = np.linspace(0.0, 1.0, _SPLINE_KNOTS)
    knots_y = rng.uniform(low, high, size=_SPLINE_KNOTS)
    curve = CubicSpline(knots_x, knots_y)(np.linspace(0.0, 1.0, n_freq))
    return np.clip(curve, low, high)


def device_profile(device: str, n_freq: int, noise: float = 0.0) -> DeviceProfile:
    """Deterministisch aus dem Geräte-Token; A ist das Identitätsprofil."""
    if device not in DEVICES:
        raise ConfigError(f"Unbekanntes Gerät '{device}'.")
    if device == "A":
        return DeviceProfile(device, np.ones(n_freq), np.zeros(n_freq), noise)
    rng = np.random.default_rng(zlib.crc32(device.encode("utf-8")))
    log_gain = _smooth_curve(rng, n_freq, np.log(GAIN_RANGE[0]), np.log(GAIN_RANGE[1]))
    offset = _smooth_curve(rng, n_freq, *OFFSET_RANGE)
    return DeviceProfile(device, np.exp(log_gain), offset, noise)


def class_templates(num_classes: int, n_freq: int, n_frames: int, seed: int) -> np.ndarray:
    """
    (K, F, T)-Vorlagen: zwei Gauss-Bänder je Klasse an klassenspezifischen Positionen,
    moduliert mit klassenspezifischer Zeitfrequenz und Phase.
    """
    rng = np.random.default_rng([seed, 7])
    freqs = np.arange(n_freq)[:, None]
    frames = np.arange(n_frames)[None, :]
    centers = np.linspace(0.1, 0.9, num_classes) * n_freq
    templates = np.zeros((num_classes, n_freq, n_frames))
    for k in range(num_classes):
        second = (centers[k] + n_freq * (0.35 + 0.3 * rng.random())) % n_freq
        width = n_freq * (0.04 + 0.03 * rng.random())
        band = np.exp(-0.5 * ((freqs - centers[k]) / width) ** 2)
        band += 0.6 * np.exp(-0.5 * ((freqs - second) / width) ** 2)
        rate = 1.0 + k % 5
        envelope = 0.5 + 0.5 * np.sin(2 * np.pi * rate * frames / n_frames + rng.uniform(0, 2 * np.pi))
        templates[k] = 3.0 * band * (0.4 + 0.6 * envelope)
    return templates


def render_clean(
    templates: np.ndarray, scene: int, content_rng: np.random.Generator, content_noise: float
) -> np.ndarray:
    """Geräteunabhängiger Inhalt eines Beispiels (F, T)."""
    template = templates[scene]
    return template + content_noise * content_rng.standard_normal(template.shape)


def render_example(
    templates: np.ndarray,
    scene: int,
    profile: DeviceProfile,
    content_rng: np.random.Generator,
    noise_rng: np.random.Generator,
    content_noise: float,
) -> np.ndarray:
    clean = render_clean(templates, scene, content_rng, content_noise)
    return profile.apply(clean, noise_rng)[None, None].astype(np.float32)


def generate_synthetic(
    seed: int,
    cfg: DataConfig = DataConfig(),
    num_classes: int = 10,
    devices: tuple[str, ...] = DEVICES,
) -> SceneDataset:
    """
    Erzeugt Training und Test. Trainingsgrössen je Gerät aus `cfg.train_sizes`, Test
    `cfg.test_per_device` je Gerät; Klassen werden reihum vergeben.
    """
    if len(devices) != 9 or any(d not in devices for d in UNSEEN_DEVICES):
        raise ConfigError("Erwartet werden die neun Geräte A, B, C, S1–S6.")
    for device in UNSEEN_DEVICES:
        if cfg.train_sizes.get(device, 0):
            raise ConfigError(f"Gerät {device} muss im Training ungesehen bleiben.")
    if cfg.synth_freq_bins % 32:
        raise ConfigError(f"synth_freq_bins={cfg.synth_freq_bins} muss ein Vielfaches von 32 sein.")

    templates = class_templates(num_classes, cfg.synth_freq_bins, cfg.synth_frames, seed)
    examples = []
    for device_index, device in enumerate(devices):
        profile = device_profile(device, cfg.synth_freq_bins, cfg.device_noise)
        sizes = {"train": cfg.train_sizes.get(device, 0), "test": cfg.test_per_device}
        for split_index, split in enumerate(("train", "test")):
            for i in range(sizes[split]):
                scene = i % num_classes
                content_rng = np.random.default_rng([seed, device_index, split_index, i, 0])
                noise_rng = np.random.default_rng([seed, device_index, split_index, i, 1])
                features = render_example(
                    templates, scene, profile, content_rng, noise_rng, cfg.content_noise
                )
                examples.append(
                    SceneExample(f"{device}-{split}-{i:05d}", features, scene, device, split)
                )
    logger.info("Synthetischer Datensatz: %d Beispiele (Seed %d)", len(examples), seed)
    return SceneDataset(examples, num_classes)
