"""
Audio-Frontend: WAV einlesen, auf 16 kHz dezimieren und 256-bandige Log-Mel-Spektrogramme berechnen.

Festgelegte Parameter (Fenster 130 ms, Vorschub 30 ms, 256 Mel-Bänder) stammen aus der
Systembeschreibung; Hann-Fenster, Leistungsspektrum und Slaney-Mel-Skala sind gewählte Standards.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Iterable

import librosa
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import signal
from scipy.io import wavfile

from app.errors import ArgumentError, DataIOError, FormatError, TooShortError

logger = logging.getLogger(__name__)

STD_FLOOR = 1e-5


@dataclass(frozen=True)
class Waveform:
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self) -> None:
        if self.sample_rate <= 0:
            raise ArgumentError("Abtastrate muss positiv sein.")

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass(frozen=True)
class MelConfig:
    target_rate: int = 16000
    n_mels: int = 256
    win_ms: int = 130
    hop_ms: int = 30
    fft_size: int = 4096
    log_floor: float = 1e-10
    fmin: float = 0.0
    fmax: float = 8000.0

    @property
    def win_samples(self) -> int:
        return self.win_ms * self.target_rate // 1000

    @property
    def hop_samples(self) -> int:
        return self.hop_ms * self.target_rate // 1000

    def __post_init__(self) -> None:
        if self.fft_size < self.win_samples:
            raise ArgumentError(
                f"fft_size {self.fft_size} ist kleiner als das Fenster ({self.win_samples} Samples)."
            )


def read_wav(path: str | Path) -> Waveform:
    """Liest eine 16-Bit-PCM-Mono-WAV-Datei als Float-Signal in [−1, 1]."""
    path = Path(path)
    if not path.exists():
        raise DataIOError(f"Audiodatei nicht gefunden: {path}")
    try:
        rate, data = wavfile.read(path)
    except ValueError as exc:
        raise FormatError(f"Keine gültige RIFF/WAVE-Datei: {path}") from exc
    if data.dtype != np.int16:
        raise FormatError(f"Nur 16-Bit-PCM wird unterstützt ({path}: {data.dtype}).")
    if data.ndim != 1:
        raise FormatError(f"Nur Mono wird unterstützt ({path}: {data.shape[1]} Kanäle).")
    return Waveform(samples=(data.astype(np.float32) / 32768.0), sample_rate=int(rate))


@lru_cache(maxsize=4)
def _decimation_filter(factor: int) -> np.ndarray:
    # Kaiser-Fenster mit beta=10: Restwelligkeit im Durchlassbereich deutlich unter 1e-3.
    return signal.firwin(80 * factor + 1, 1.0 / factor, window=("kaiser", 10.0))


def resample(w: Waveform, target: int) -> Waveform:
    """
    Dezimiert um einen ganzzahligen Faktor (48 kHz → 16 kHz) mit Tiefpass-Vorfilter.

    Gleiche Rate ist die Identität; andere Verhältnisse sind nicht unterstützt.
    """
    if target == w.sample_rate:
        return w
    if target <= 0 or target > w.sample_rate or w.sample_rate % target:
        raise ArgumentError(
            f"Nur ganzzahlige Dezimation wird unterstützt ({w.sample_rate} Hz → {target} Hz)."
        )
    factor = w.sample_rate // target
    out = signal.resample_poly(w.samples, 1, factor, window=_decimation_filter(factor))
    return Waveform(samples=out.astype(np.float32), sample_rate=target)


@lru_cache(maxsize=4)
def mel_filterbank(cfg: MelConfig) -> np.ndarray:
    """Slaney-Mel-Filterbank (n_mels × fft_size/2+1), flächennormiert."""
    return librosa.filters.mel(
        sr=cfg.target_rate,
        n_fft=cfg.fft_size,
        n_mels=cfg.n_mels,
        fmin=cfg.fmin,
        fmax=cfg.fmax,
        htk=False,
        norm="slaney",
    ).astype(np.float64)


def frame_count(n_samples: int, cfg: MelConfig) -> int:
    """floor((len − win) / hop) + 1 vollständig innenliegende Frames."""
    return (n_samples - cfg.win_samples) // cfg.hop_samples + 1


def logmel(w: Waveform, cfg: MelConfig = MelConfig()) -> np.ndarray:
    """
    Log-Mel-Spektrogramm mit Form (1, 1, n_mels, T).

    Keine Zentrierung: alle Frames liegen vollständig im Signal. Werte sind
    ln(Mel-Leistung + log_floor).
    """
    if w.sample_rate != cfg.target_rate:
        raise ArgumentError(
            f"Signal hat {w.sample_rate} Hz, erwartet werden {cfg.target_rate} Hz."
        )
    if len(w.samples) < cfg.win_samples:
        raise TooShortError(
            f"Signal mit {len(w.samples)} Samples ist kürzer als ein Fenster ({cfg.win_samples})."
        )
    frames = sliding_window_view(np.asarray(w.samples, dtype=np.float64), cfg.win_samples)
    frames = frames[:: cfg.hop_samples]
    window = signal.get_window("hann", cfg.win_samples)
    spectrum = np.fft.rfft(frames * window, n=cfg.fft_size, axis=-1)
    power = spectrum.real**2 + spectrum.imag**2
    mel_power = power @ mel_filterbank(cfg).T
    features = np.log(mel_power + cfg.log_floor).T
    return features[None, None].astype(np.float32)


def global_freq_stats(features: Iterable[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    """
    Mittelwert und Populations-Standardabweichung je Frequenzband über alle Beispiele.

    Jedes Element hat Form (..., F, T); gepoolt wird über alle Achsen ausser F.
    Die Standardabweichung wird bei 1e-5 nach unten begrenzt.
    """
    total = None
    total_sq = None
    count = 0
    for fmap in features:
        arr = np.asarray(fmap, dtype=np.float64)
        arr = np.moveaxis(arr, -2, 0).reshape(arr.shape[-2], -1)
        if total is None:
            total = np.zeros(arr.shape[0])
            total_sq = np.zeros(arr.shape[0])
        total += arr.sum(axis=1)
        total_sq += (arr * arr).sum(axis=1)
        count += arr.shape[1]
    if total is None or count == 0:
        raise ArgumentError("Frequenzstatistik benötigt mindestens ein Beispiel.")
    mean = total / count
    var = np.maximum(total_sq / count - mean * mean, 0.0)
    return mean.astype(np.float32), np.maximum(np.sqrt(var), STD_FLOOR).astype(np.float32)


def waveform_to_features(path: str | Path, cfg: MelConfig = MelConfig()) -> np.ndarray:
    """Kompletter Pfad WAV → Resampling → Log-Mel (1, 1, F, T)."""
    wave = resample(read_wav(path), cfg.target_rate)
    logger.debug("Log-Mel fuer %s (%d Samples)", path, len(wave.samples))
    return logmel(wave, cfg)
