"""
Normalisierungen: frequenzweise Instanz-Normalisierung (FreqIN), ResNorm,
Batch-Norm, Subspectral-Norm und eine feste globale Frequenz-Normalisierung.

FreqIN standardisiert jedes (Beispiel, Frequenzband) über Kanäle und Zeit mit
Populationsvarianz. ResNorm addiert eine mit λ gewichtete Identität:
    res_norm(x) = λ·x + freq_in(x)
Beide Schichten haben keine lernbaren Parameter.
"""

from __future__ import annotations

import logging
from typing import Any, Sequence

import numpy as np

from app.core import ops
from app.core.tensor import Tensor
from app.errors import ArgumentError, ConfigError, DimensionError
from app.model.layers import Module

logger = logging.getLogger(__name__)

DEFAULT_EPS = 1e-5


def _require_rank4(x: Tensor | np.ndarray, op: str) -> None:
    if x.ndim != 4:
        raise DimensionError(f"{op} erwartet (N, C, F, T), erhalten {tuple(x.shape)}.")


def freq_in(x: Tensor, eps: float = DEFAULT_EPS) -> Tensor:
    """Statistik je (n, f) über (c, t); Ausgabe hat dieselbe Form wie die Eingabe."""
    _require_rank4(x, "freq_in")
    return ops.standardize(x, axes=(1, 3), eps=eps)


def res_norm(x: Tensor, lam: float, eps: float = DEFAULT_EPS) -> Tensor:
    if lam < 0:
        raise ArgumentError(f"λ darf nicht negativ sein (erhalten {lam}).")
    normalized = freq_in(x, eps)
    if lam == 0:
        return normalized
    return x * lam + normalized


class ResNormLayer(Module):
    def __init__(self, lam: float = 0.1, eps: float = DEFAULT_EPS) -> None:
        super().__init__()
        if eps <= 0:
            raise ConfigError("ε muss positiv sein.")
        if lam < 0:
            raise ConfigError("λ darf nicht negativ sein.")
        self.lam = float(lam)
        self.eps = float(eps)

    def forward(self, x: Tensor, **kwargs: Any) -> Tensor:
        return res_norm(x, self.lam, self.eps)


class GlobalFreqNorm(Module):
    """
    Feste Standardisierung je Frequenzband mit Datensatz-Statistiken.

    Solange keine Statistik gesetzt ist, wirkt die Schicht als Identität.
    """

    def __init__(self) -> None:
        super().__init__()
        self.register_buffer("mean", np.zeros(0))
        self.register_buffer("std", np.zeros(0))

    def set_stats(self, mean: np.ndarray, std: np.ndarray) -> None:
        mean = np.asarray(mean, dtype=np.float32).reshape(-1)
        std = np.asarray(std, dtype=np.float32).reshape(-1)
        if mean.shape != std.shape:
            raise DimensionError("Mittelwert und Standardabweichung haben unterschiedliche Länge.")
        self._buffers["mean"] = mean
        self._buffers["std"] = std

    @property
    def fitted(self) -> bool:
        return self.buffer("mean").size > 0

    def forward(self, x: Tensor, **kwargs: Any) -> Tensor:
        if not self.fitted:
            return x
        _require_rank4(x, "GlobalFreqNorm")
        mean = self.buffer("mean")
        if mean.shape[0] != x.shape[2]:
            raise DimensionError(
                f"Statistik hat {mean.shape[0]} Bänder, Eingabe hat F={x.shape[2]}."
            )
        shift = mean.reshape(1, 1, -1, 1).astype(x.dtype)
        scale = (1.0 / self.buffer("std")).reshape(1, 1, -1, 1).astype(x.dtype)
        return (x - shift) * scale


class BatchNorm2d(Module):
    """
    Batch-Normalisierung je Kanal über (N, F, T).

    Im Training wird mit der Batch-Statistik normalisiert; laufende Mittelwerte und
    (unverzerrte) Varianzen werden mit `momentum` nachgeführt. Im Evaluationsmodus
    wird ausschliesslich die laufende Statistik verwendet.
    """

    def __init__(self, num_features: int, momentum: float = 0.1, eps: float = DEFAULT_EPS) -> None:
        super().__init__()
        self.num_features = num_features
        self.momentum = float(momentum)
        self.eps = float(eps)
        self.weight = Tensor(np.ones(num_features), requires_grad=True)
        self.bias = Tensor(np.zeros(num_features), requires_grad=True)
        self.register_buffer("running_mean", np.zeros(num_features))
        self.register_buffer("running_var", np.ones(num_features))

    def _normalize(self, x: Tensor) -> Tensor:
        if x.shape[1] != self.num_features:
            raise DimensionError(
                f"BatchNorm erwartet {self.num_features} Kanäle, erhalten {x.shape[1]}."
            )
        if self.training:
            y = ops.standardize(x, axes=(0, 2, 3), eps=self.eps)
            creator = y.creator
            if creator is not None:
                mu, var = creator.saved["mean"], creator.saved["var"]
            else:
                mu = x.data.mean(axis=(0, 2, 3), keepdims=True)
                var = ((x.data - mu) ** 2).mean(axis=(0, 2, 3), keepdims=True)
            self._update_running(mu.reshape(-1), var.reshape(-1), x.size // x.shape[1])
            return y
        shift = self.buffer("running_mean").reshape(1, -1, 1, 1).astype(x.dtype)
        inv = (1.0 / np.sqrt(self.buffer("running_var") + self.eps)).reshape(1, -1, 1, 1)
        return (x - shift) * inv.astype(x.dtype)

    def _update_running(self, mu: np.ndarray, var: np.ndarray, count: int) -> None:
        unbiased = var * count / max(count - 1, 1)
        m = self.momentum
        self._buffers["running_mean"] = (
            (1 - m) * self._buffers["running_mean"] + m * mu
        ).astype(np.float32)
        self._buffers["running_var"] = (
            (1 - m) * self._buffers["running_var"] + m * unbiased
        ).astype(np.float32)

    def forward(self, x: Tensor, **kwargs: Any) -> Tensor:
        _require_rank4(x, type(self).__name__)
        y = self._normalize(x)
        weight = self.param("weight").reshape(1, -1, 1, 1)
        bias = self.param("bias").reshape(1, -1, 1, 1)
        return y * weight + bias


class SubSpectralNorm(BatchNorm2d):
    """
    Batch-Norm mit eigener Statistik und eigenem Affin-Paar je (Kanal, Teilband).

    Die Frequenzachse wird in `sub_bands` gleich grosse Gruppen zerlegt; intern ist das
    eine Batch-Norm über C·S Kanäle auf der Form (N, C·S, F/S, T).
    """

    def __init__(
        self, channels: int, sub_bands: int = 4, momentum: float = 0.1, eps: float = DEFAULT_EPS
    ) -> None:
        super().__init__(channels * sub_bands, momentum, eps)
        self.channels = channels
        self.sub_bands = sub_bands

    def forward(self, x: Tensor, **kwargs: Any) -> Tensor:
        _require_rank4(x, "SubSpectralNorm")
        n, c, f, t = x.shape
        if f % self.sub_bands:
            raise ConfigError(
                f"F={f} ist nicht durch {self.sub_bands} Teilbänder teilbar."
            )
        grouped = x.reshape(n, c * self.sub_bands, f // self.sub_bands, t)
        return super().forward(grouped).reshape(n, c, f, t)


def export_domain_stats(x: np.ndarray | Tensor) -> tuple[np.ndarray, np.ndarray]:
    """
    Frequenz- und Kanalstatistik je Beispiel.

    Rückgabe: (N × 2F) = [Mittelwerte je f, Std je f] über (c, t) und
    (N × 2C) = [Mittelwerte je c, Std je c] über (f, t).
    """
    data = x.data if isinstance(x, Tensor) else np.asarray(x)
    _require_rank4(data, "export_domain_stats")
    data = data.astype(np.float64)
    freq = np.concatenate([data.mean(axis=(1, 3)), data.std(axis=(1, 3))], axis=1)
    chan = np.concatenate([data.mean(axis=(2, 3)), data.std(axis=(2, 3))], axis=1)
    return freq, chan


def format_stats_tsv(ids: Sequence[str], stats: np.ndarray) -> str:
    """Eine Zeile je Beispiel: id, dann die Werte, tabulatorgetrennt."""
    if len(ids) != len(stats):
        raise DimensionError(f"{len(ids)} ids, aber {len(stats)} Statistikzeilen.")
    lines = []
    for ident, row in zip(ids, stats):
        lines.append("\t".join([ident, *(f"{v:.6g}" for v in row)]))
    return "\n".join(lines) + ("\n" if lines else "")


def fit_global_norm(module: GlobalFreqNorm, features: Sequence[np.ndarray]) -> None:
    """Berechnet die globale Frequenzstatistik aus Trainingsmerkmalen und setzt sie als Buffer."""
    from app.audio.frontend import global_freq_stats

    mean, std = global_freq_stats(features)
    module.set_stats(mean, std)
    logger.info("Globale Frequenzstatistik aus %d Beispielen gesetzt", len(features))
