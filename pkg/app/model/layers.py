"""
Schichten-Basis: Parameter- und Buffer-Registry, Trainings-/Evaluationsmodus und
Parameter-Transformationen (Maske, Fake-Quantisierung, Halbpräzision).

Jedes lernbare Tensor-Objekt ist über genau einen Pfad erreichbar
(z.B. `stage2.0.freq_dw.weight`). Die Reihenfolge der Registrierung ist stabil
und bestimmt die Reihenfolge in Checkpoints.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass
from typing import Any, Callable, Iterator, Mapping

import numpy as np

from app.core import conv as conv_ops
from app.core.tensor import Tensor
from app.errors import ConfigError, DimensionError

# hook(pfad, tensor) -> tensor; wird bei jedem Parameterzugriff im Vorwärtsdurchlauf angewendet.
ParamHook = Callable[[str, Tensor], Tensor]


def _join(prefix: str, name: str) -> str:
    return f"{prefix}.{name}" if prefix else name


class Module:
    """Basisklasse aller Schichten mit Registry für Parameter, Buffer und Untermodule."""

    def __init__(self) -> None:
        object.__setattr__(self, "_parameters", OrderedDict())
        object.__setattr__(self, "_buffers", OrderedDict())
        object.__setattr__(self, "_modules", OrderedDict())
        object.__setattr__(self, "training", True)
        object.__setattr__(self, "_param_hook", None)
        object.__setattr__(self, "_prefix", "")

    def __setattr__(self, name: str, value: Any) -> None:
        if isinstance(value, Module):
            self._modules[name] = value
        elif isinstance(value, Tensor) and value.requires_grad:
            value.name = name
            self._parameters[name] = value
        object.__setattr__(self, name, value)

    def register_buffer(self, name: str, value: np.ndarray) -> None:
        """Buffer (z.B. laufende Statistiken) sind Zustand, aber keine lernbaren Parameter."""
        self._buffers[name] = np.asarray(value, dtype=np.float32)

    def buffer(self, name: str) -> np.ndarray:
        return self._buffers[name]

    def set_buffer(self, name: str, value: np.ndarray) -> None:
        if name not in self._buffers:
            raise KeyError(name)
        self._buffers[name] = np.asarray(value, dtype=np.float32)

    def param(self, name: str) -> Tensor:
        """Liefert den Parameter, ggf. durch den installierten Hook transformiert."""
        tensor = self._parameters[name]
        if self._param_hook is None:
            return tensor
        return self._param_hook(_join(self._prefix, name), tensor)

    # -- Registry --

    def named_modules(self, prefix: str = "") -> Iterator[tuple[str, "Module"]]:
        yield prefix, self
        for name, child in self._modules.items():
            yield from child.named_modules(_join(prefix, name))

    def named_parameters(self) -> Iterator[tuple[str, Tensor]]:
        for prefix, module in self.named_modules():
            for name, tensor in module._parameters.items():
                yield _join(prefix, name), tensor

    def named_buffers(self) -> Iterator[tuple[str, np.ndarray]]:
        for prefix, module in self.named_modules():
            for name, value in module._buffers.items():
                yield _join(prefix, name), value

    def parameters(self) -> list[Tensor]:
        return [t for _, t in self.named_parameters()]

    def zero_grad(self) -> None:
        for tensor in self.parameters():
            tensor.zero_grad()

    # -- Modus --

    def train(self, mode: bool = True) -> "Module":
        for _, module in self.named_modules():
            object.__setattr__(module, "training", mode)
        return self

    def eval(self) -> "Module":
        return self.train(False)

    # -- Hooks --

    def install_param_hook(self, hook: ParamHook | None) -> None:
        for prefix, module in self.named_modules():
            object.__setattr__(module, "_param_hook", hook)
            object.__setattr__(module, "_prefix", prefix)

    def clear_param_hook(self) -> None:
        self.install_param_hook(None)

    # -- Zustand --

    def state_dict(self) -> "OrderedDict[str, np.ndarray]":
        """Kopie aller Parameter und Buffer in Registry-Reihenfolge."""
        state: OrderedDict[str, np.ndarray] = OrderedDict()
        for name, tensor in self.named_parameters():
            state[name] = tensor.data.copy()
        for name, value in self.named_buffers():
            state[name] = value.copy()
        return state

    def buffer_names(self) -> set[str]:
        return {name for name, _ in self.named_buffers()}

    def load_state_dict(self, state: Mapping[str, np.ndarray]) -> None:
        """Lädt Parameter und Buffer; fehlende oder überzählige Namen sind ein Konfigurationsfehler."""
        params = dict(self.named_parameters())
        owners = {
            _join(prefix, name): (module, name)
            for prefix, module in self.named_modules()
            for name in module._buffers
        }
        expected = set(params) | set(owners)
        missing = expected - set(state)
        extra = set(state) - expected
        if missing or extra:
            raise ConfigError(
                "Checkpoint passt nicht zum Modell "
                f"(fehlend: {sorted(missing)[:3]}, überzählig: {sorted(extra)[:3]})."
            )
        for name, tensor in params.items():
            value = np.asarray(state[name])
            if value.shape != tensor.shape:
                raise ConfigError(f"Form von '{name}' ist {value.shape}, erwartet {tensor.shape}.")
            tensor.data = np.ascontiguousarray(value, dtype=tensor.dtype)
            tensor.grad = None
        for name, (module, local) in owners.items():
            value = np.asarray(state[name], dtype=np.float32)
            current = module._buffers[local]
            # Leere Buffer (z.B. noch nicht angepasste globale Statistiken) übernehmen jede Form.
            if current.size and value.shape != current.shape:
                raise ConfigError(f"Form von '{name}' ist {value.shape}, erwartet {current.shape}.")
            module._buffers[local] = value.copy()

    def __call__(self, x: Tensor, **kwargs: Any) -> Tensor:
        return self.forward(x, **kwargs)

    def forward(self, x: Tensor, **kwargs: Any) -> Tensor:
        raise NotImplementedError


@dataclass(frozen=True)
class LayerGeometry:
    """Kernel und Schrittweite einer Schicht entlang (Frequenz, Zeit)."""

    name: str
    kind: str
    kernel: tuple[int, int]
    stride: tuple[int, int]


class Identity(Module):
    def forward(self, x: Tensor, **kwargs: Any) -> Tensor:
        return x


class Conv2d(Module):
    """Faltungsschicht; Gewichte He-normalverteilt, Bias optional und mit 0 initialisiert."""

    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        kernel: int | tuple[int, int],
        rng: np.random.Generator,
        *,
        stride: int | tuple[int, int] = 1,
        padding: int | tuple[int, int] = 0,
        groups: int = 1,
        bias: bool = False,
    ) -> None:
        super().__init__()
        if in_channels % groups or out_channels % groups:
            raise DimensionError(
                f"Kanäle {in_channels}/{out_channels} nicht durch groups={groups} teilbar."
            )
        kh, kw = conv_ops._pair(kernel)
        fan_in = (in_channels // groups) * kh * kw
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel = (kh, kw)
        self.stride = conv_ops._pair(stride)
        self.padding = conv_ops._pair(padding)
        self.groups = groups
        self.weight = Tensor(
            rng.standard_normal((out_channels, in_channels // groups, kh, kw)) * np.sqrt(2.0 / fan_in),
            requires_grad=True,
        )
        self.has_bias = bias
        if bias:
            self.bias = Tensor(np.zeros(out_channels), requires_grad=True)

    def forward(self, x: Tensor, **kwargs: Any) -> Tensor:
        bias = self.param("bias") if self.has_bias else None
        return conv_ops.conv2d(
            x, self.param("weight"), bias, stride=self.stride, padding=self.padding, groups=self.groups
        )

    def geometry(self, name: str) -> LayerGeometry:
        return LayerGeometry(name, "conv", self.kernel, self.stride)


class MaxPool(Module):
    def __init__(self, window: int = 2) -> None:
        super().__init__()
        self.window = conv_ops._pair(window)

    def forward(self, x: Tensor, **kwargs: Any) -> Tensor:
        return conv_ops.pool2d(x, "max", self.window)

    def geometry(self, name: str) -> LayerGeometry:
        return LayerGeometry(name, "pool", self.window, self.window)


class Sequential(Module):
    """Hält Untermodule unter den Namen "0", "1", ...; Vorwärtsargumente werden durchgereicht."""

    def __init__(self, *modules: Module) -> None:
        super().__init__()
        for index, module in enumerate(modules):
            setattr(self, str(index), module)

    def __iter__(self) -> Iterator[Module]:
        return iter(self._modules.values())

    def __len__(self) -> int:
        return len(self._modules)

    def __getitem__(self, index: int) -> Module:
        return self._modules[str(index)]

    def forward(self, x: Tensor, **kwargs: Any) -> Tensor:
        for module in self:
            x = module(x, **kwargs)
        return x
