"""
2-D-Korrelation (Faltung im Deep-Learning-Sinn) und Pooling auf (N, C, H, W)-Tensoren.

Konventionen:
- Korrelation, kein gespiegelter Kern.
- Padding mit 0 für Faltung und Average-Pooling, mit −inf für Max-Pooling.
- Ausgabegrösse floor((in + 2·pad − k) / stride) + 1.
"""

from __future__ import annotations

from typing import Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from app.core.ops import as_tensor
from app.core.tensor import Function, Tensor
from app.errors import ArgumentError, DimensionError

Pair = Tuple[int, int]


def _pair(value: int | Pair) -> Pair:
    if isinstance(value, int):
        return value, value
    return int(value[0]), int(value[1])


def output_extent(size: int, kernel: int, stride: int, pad: int) -> int:
    """floor((size + 2·pad − kernel) / stride) + 1"""
    return (size + 2 * pad - kernel) // stride + 1


def _pad(x: np.ndarray, padding: Pair, value: float = 0.0) -> np.ndarray:
    ph, pw = padding
    if ph == 0 and pw == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)), constant_values=value)


def _windows(xp: np.ndarray, kernel: Pair, stride: Pair, out: Pair) -> np.ndarray:
    """Sicht (N, C, Ho, Wo, kh, kw) auf alle Fenster des gepaddeten Eingangs."""
    view = sliding_window_view(xp, kernel, axis=(2, 3))
    return view[:, :, : out[0] * stride[0] : stride[0], : out[1] * stride[1] : stride[1]]


def _scatter_windows(
    target: np.ndarray, grads: np.ndarray, kernel: Pair, stride: Pair, out: Pair
) -> None:
    """Addiert Fenster-Gradienten (N, C, Ho, Wo, kh, kw) zurück in den gepaddeten Eingang."""
    (kh, kw), (sh, sw), (ho, wo) = kernel, stride, out
    for i in range(kh):
        for j in range(kw):
            target[:, :, i : i + sh * ho : sh, j : j + sw * wo : sw] += grads[..., i, j]


class Conv2d(Function):
    def forward(
        self,
        x: np.ndarray,
        w: np.ndarray,
        b: np.ndarray | None = None,
        *,
        stride: Pair,
        padding: Pair,
        groups: int,
    ) -> np.ndarray:
        n, c, h, wd = x.shape
        o, cg, kh, kw = w.shape
        if c % groups or o % groups:
            raise DimensionError(
                f"conv2d: Kanäle (in={c}, out={o}) nicht durch groups={groups} teilbar."
            )
        if cg != c // groups:
            raise DimensionError(
                f"conv2d: Gewicht erwartet {cg} Eingangskanäle pro Gruppe, Eingang liefert {c // groups} (Achse 1)."
            )
        ho = output_extent(h, kh, stride[0], padding[0])
        wo = output_extent(wd, kw, stride[1], padding[1])
        if ho <= 0 or wo <= 0:
            raise DimensionError(
                f"conv2d: Kern {kh}x{kw} passt nicht in gepaddeten Eingang {h + 2 * padding[0]}x{wd + 2 * padding[1]} (Achsen 2, 3)."
            )
        xp = _pad(x, padding)
        self.saved.update(
            xp=xp, w=w, x_shape=x.shape, stride=stride, padding=padding,
            groups=groups, out=(ho, wo), has_bias=b is not None,
        )
        if groups == 1:
            out = self._dense_forward(xp, w, stride, (ho, wo))
        elif cg == 1 and o == c:
            out = self._depthwise_forward(xp, w, stride, (ho, wo))
        else:
            og = o // groups
            out = np.concatenate(
                [
                    self._dense_forward(
                        xp[:, g * cg : (g + 1) * cg], w[g * og : (g + 1) * og], stride, (ho, wo)
                    )
                    for g in range(groups)
                ],
                axis=1,
            )
        if b is not None:
            out = out + b.reshape(1, -1, 1, 1)
        return out

    @staticmethod
    def _dense_forward(xp: np.ndarray, w: np.ndarray, stride: Pair, out: Pair) -> np.ndarray:
        n = xp.shape[0]
        o, c, kh, kw = w.shape
        cols = _windows(xp, (kh, kw), stride, out).transpose(0, 2, 3, 1, 4, 5)
        cols = cols.reshape(n * out[0] * out[1], c * kh * kw)
        res = cols @ w.reshape(o, -1).T
        return res.reshape(n, out[0], out[1], o).transpose(0, 3, 1, 2)

    @staticmethod
    def _depthwise_forward(xp: np.ndarray, w: np.ndarray, stride: Pair, out: Pair) -> np.ndarray:
        (sh, sw), (ho, wo) = stride, out
        kh, kw = w.shape[2:]
        res = np.zeros((xp.shape[0], xp.shape[1], ho, wo), dtype=np.result_type(xp, w))
        for i in range(kh):
            for j in range(kw):
                tap = w[:, 0, i, j].reshape(1, -1, 1, 1)
                res += tap * xp[:, :, i : i + sh * ho : sh, j : j + sw * wo : sw]
        return res

    def backward(self, grad: np.ndarray):
        s = self.saved
        xp, w, stride, groups, out = s["xp"], s["w"], s["stride"], s["groups"], s["out"]
        o, cg, kh, kw = w.shape
        dxp = np.zeros_like(xp)
        if groups == 1:
            dw = self._dense_backward(xp, w, grad, stride, out, dxp)
        elif cg == 1 and o == xp.shape[1]:
            dw = np.zeros_like(w)
            sh, sw = stride
            ho, wo = out
            for i in range(kh):
                for j in range(kw):
                    sl = (slice(None), slice(None), slice(i, i + sh * ho, sh), slice(j, j + sw * wo, sw))
                    dw[:, 0, i, j] = (grad * xp[sl]).sum(axis=(0, 2, 3))
                    dxp[sl] += grad * w[:, 0, i, j].reshape(1, -1, 1, 1)
        else:
            og = o // groups
            parts = []
            for g in range(groups):
                part = dxp[:, g * cg : (g + 1) * cg]
                parts.append(
                    self._dense_backward(
                        xp[:, g * cg : (g + 1) * cg],
                        w[g * og : (g + 1) * og],
                        grad[:, g * og : (g + 1) * og],
                        stride,
                        out,
                        part,
                    )
                )
            dw = np.concatenate(parts, axis=0)
        ph, pw = s["padding"]
        h, wd = s["x_shape"][2:]
        dx = dxp[:, :, ph : ph + h, pw : pw + wd]
        db = grad.sum(axis=(0, 2, 3)) if s["has_bias"] else None
        return (dx, dw, db) if s["has_bias"] else (dx, dw)

    @staticmethod
    def _dense_backward(
        xp: np.ndarray, w: np.ndarray, grad: np.ndarray, stride: Pair, out: Pair, dxp: np.ndarray
    ) -> np.ndarray:
        n = xp.shape[0]
        o, c, kh, kw = w.shape
        cols = _windows(xp, (kh, kw), stride, out).transpose(0, 2, 3, 1, 4, 5)
        cols = cols.reshape(n * out[0] * out[1], c * kh * kw)
        g2 = grad.transpose(0, 2, 3, 1).reshape(-1, o)
        dw = (g2.T @ cols).reshape(w.shape)
        dcols = (g2 @ w.reshape(o, -1)).reshape(n, out[0], out[1], c, kh, kw)
        _scatter_windows(dxp, dcols.transpose(0, 3, 1, 2, 4, 5), (kh, kw), stride, out)
        return dw


class MaxPool2d(Function):
    def forward(self, x: np.ndarray, *, kernel: Pair, stride: Pair, padding: Pair) -> np.ndarray:
        ho = output_extent(x.shape[2], kernel[0], stride[0], padding[0])
        wo = output_extent(x.shape[3], kernel[1], stride[1], padding[1])
        if ho <= 0 or wo <= 0:
            raise DimensionError(f"max_pool: Fenster {kernel} grösser als Eingang {x.shape[2:]} (Achsen 2, 3).")
        xp = _pad(x, padding, value=-np.inf)
        win = _windows(xp, kernel, stride, (ho, wo))
        flat = win.reshape(*win.shape[:4], -1)
        # argmax liefert bei Gleichstand das erste Element in Zeilenreihenfolge.
        arg = flat.argmax(axis=-1)
        self.saved.update(arg=arg, xp_shape=xp.shape, x_shape=x.shape, kernel=kernel,
                          stride=stride, padding=padding, out=(ho, wo))
        return np.take_along_axis(flat, arg[..., None], axis=-1)[..., 0]

    def backward(self, grad: np.ndarray):
        s = self.saved
        (kh, kw), (sh, sw), (ho, wo) = s["kernel"], s["stride"], s["out"]
        dxp = np.zeros(s["xp_shape"], dtype=grad.dtype)
        for k in range(kh * kw):
            i, j = divmod(k, kw)
            dxp[:, :, i : i + sh * ho : sh, j : j + sw * wo : sw] += np.where(s["arg"] == k, grad, 0)
        ph, pw = s["padding"]
        h, w = s["x_shape"][2:]
        return (dxp[:, :, ph : ph + h, pw : pw + w],)


class AvgPool2d(Function):
    def forward(self, x: np.ndarray, *, kernel: Pair, stride: Pair, padding: Pair) -> np.ndarray:
        ho = output_extent(x.shape[2], kernel[0], stride[0], padding[0])
        wo = output_extent(x.shape[3], kernel[1], stride[1], padding[1])
        if ho <= 0 or wo <= 0:
            raise DimensionError(f"avg_pool: Fenster {kernel} grösser als Eingang {x.shape[2:]} (Achsen 2, 3).")
        xp = _pad(x, padding)
        self.saved.update(xp_shape=xp.shape, x_shape=x.shape, kernel=kernel,
                          stride=stride, padding=padding, out=(ho, wo))
        return _windows(xp, kernel, stride, (ho, wo)).mean(axis=(-2, -1))

    def backward(self, grad: np.ndarray):
        s = self.saved
        kh, kw = s["kernel"]
        dxp = np.zeros(s["xp_shape"], dtype=grad.dtype)
        spread = np.broadcast_to((grad / (kh * kw))[..., None, None], grad.shape + (kh, kw))
        _scatter_windows(dxp, spread, s["kernel"], s["stride"], s["out"])
        ph, pw = s["padding"]
        h, w = s["x_shape"][2:]
        return (dxp[:, :, ph : ph + h, pw : pw + w],)


def conv2d(
    x: Tensor,
    w: Tensor,
    b: Tensor | None = None,
    stride: int | Pair = 1,
    padding: int | Pair = 0,
    groups: int = 1,
) -> Tensor:
    """Korrelation von `x` (N, C, H, W) mit `w` (O, C/groups, kh, kw); regulär, depthwise oder 1×1."""
    if x.ndim != 4 or w.ndim != 4:
        raise DimensionError(f"conv2d erwartet Rang 4, erhalten {x.shape} und {w.shape}.")
    if groups < 1:
        raise ArgumentError("groups muss >= 1 sein.")
    inputs = (x, w) if b is None else (x, w, as_tensor(b, like=x))
    return Conv2d.apply(*inputs, stride=_pair(stride), padding=_pair(padding), groups=groups)


def pool2d(
    x: Tensor,
    kind: str,
    window: int | Pair,
    stride: int | Pair | None = None,
    padding: int | Pair = 0,
) -> Tensor:
    """Max- oder Average-Pooling; ohne `stride` entspricht die Schrittweite dem Fenster."""
    kernel = _pair(window)
    if kernel[0] <= 0 or kernel[1] <= 0:
        raise ArgumentError(f"Pooling-Fenster {kernel} muss positiv sein.")
    if x.ndim != 4:
        raise DimensionError(f"pool2d erwartet Rang 4, erhalten {x.shape}.")
    step = kernel if stride is None else _pair(stride)
    if kind == "max":
        return MaxPool2d.apply(x, kernel=kernel, stride=step, padding=_pair(padding))
    if kind == "avg":
        return AvgPool2d.apply(x, kernel=kernel, stride=step, padding=_pair(padding))
    raise ArgumentError(f"Unbekannte Pooling-Art '{kind}'.")
