"""WaveNet-style bottleneck extractor: gated, non-causal dilated convolutions.

Layer ``l`` pads its input by ``dilation_l*(K-1)/2`` zeros on both sides, so
the stack keeps the sequence length and looks ``sum(dilation_l*(K-1)/2)``
frames into the future.  The streaming stepper reproduces the offline
output exactly: zero-initialised buffers play the role of the left
padding and :func:`wavenet_flush` supplies the right padding.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels as K
from .errors import ConfigurationError, StateError
from .streams import Chain, Window


@dataclass(frozen=True)
class WaveNetConfig:
    in_channels: int = 16
    channels: int = 16
    out_channels: int = 16
    kernel_size: int = 3
    dilations: tuple = (1, 2, 4, 8)
    gated: bool = True
    residual: bool = True
    skip: bool = True

    def __post_init__(self):
        object.__setattr__(self, "dilations", tuple(int(d) for d in self.dilations))
        if self.kernel_size % 2 == 0:
            raise ConfigurationError("bottleneck kernel size must be odd")
        if any(d < 1 for d in self.dilations):
            raise ConfigurationError("dilations must be >= 1")

    @property
    def num_layers(self) -> int:
        return len(self.dilations)

    def layer_reach(self, layer: int) -> int:
        return self.dilations[layer] * (self.kernel_size - 1) // 2

    @property
    def future_reach(self) -> int:
        return sum(self.layer_reach(i) for i in range(self.num_layers))


def init_weights(cfg: WaveNetConfig, rng: np.random.Generator, prefix: str = "wavenet") -> dict:
    def uni(shape, fan_in):
        bound = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=shape).astype(K.DTYPE)

    c = cfg.channels
    gate = 2 * c if cfg.gated else c
    w = {
        f"{prefix}.in.w": uni((c, cfg.in_channels, 1), cfg.in_channels),
        f"{prefix}.in.b": uni((c,), cfg.in_channels),
    }
    for layer in range(cfg.num_layers):
        p = f"{prefix}.{layer}."
        w[p + "conv.w"] = uni((gate, c, cfg.kernel_size), c * cfg.kernel_size)
        w[p + "conv.b"] = uni((gate,), c * cfg.kernel_size)
        w[p + "res.w"] = uni((c, c, 1), c)
        w[p + "res.b"] = uni((c,), c)
        w[p + "skip.w"] = uni((c, c, 1), c)
        w[p + "skip.b"] = uni((c,), c)
    w[f"{prefix}.out.w"] = uni((cfg.out_channels, c, 1), c)
    w[f"{prefix}.out.b"] = uni((cfg.out_channels,), c)
    return w


def _pointwise(x, weights, name):
    wt = weights[name + ".w"]
    return K.conv1d(x, wt, K.ConvSpec(wt.shape[1], wt.shape[0], 1), bias=weights[name + ".b"])


def _gate(z, cfg):
    if not cfg.gated:
        return K.tanh(z)
    c = cfg.channels
    return K.tanh(z[:, :c]) * K.sigmoid(z[:, c:])


def _layer_update(h, skips, z, layer, cfg, weights, prefix):
    """Residual and skip update for one layer given its convolution output ``z``."""
    a = _gate(z, cfg)
    p = f"{prefix}.{layer}."
    res = _pointwise(a, weights, p + "res")
    h = h + res if cfg.residual else res
    if cfg.skip:
        skips = skips + _pointwise(a, weights, p + "skip")
    return h, skips


def _head(h, skips, cfg, weights, prefix):
    return _pointwise(K.relu(skips if cfg.skip else h), weights, f"{prefix}.out")


def wavenet_offline(x: np.ndarray, cfg: WaveNetConfig, weights: dict, prefix: str = "wavenet") -> np.ndarray:
    x = K.as_tensor(x)
    if x.shape[0] == 0:
        return np.zeros((0, cfg.out_channels), K.DTYPE)
    h = _pointwise(x, weights, f"{prefix}.in")
    skips = np.zeros_like(h)
    for layer in range(cfg.num_layers):
        p = f"{prefix}.{layer}."
        wt = weights[p + "conv.w"]
        spec = K.ConvSpec(cfg.channels, wt.shape[0], cfg.kernel_size, cfg.dilations[layer])
        pad = cfg.layer_reach(layer)
        z = K.conv1d(h, wt, spec, left_pad=pad, right_pad=pad, bias=weights[p + "conv.b"])
        h, skips = _layer_update(h, skips, z, layer, cfg, weights, prefix)
    return _head(h, skips, cfg, weights, prefix)


def _layer_window(layer, cfg, weights, prefix) -> Window:
    """Streaming window over rows ``[h | skips]`` for one layer."""
    c = cfg.channels
    p = f"{prefix}.{layer}."
    wt = weights[p + "conv.w"]
    spec = K.ConvSpec(c, wt.shape[0], cfg.kernel_size, cfg.dilations[layer])
    reach = cfg.layer_reach(layer)

    def fn(seq):
        z = K.conv1d(seq[:, :c], wt, spec, bias=weights[p + "conv.b"])
        centre = seq[reach : seq.shape[0] - reach]
        h, skips = _layer_update(centre[:, :c], centre[:, c:], z, layer, cfg, weights, prefix)
        return np.concatenate([h, skips], axis=1)

    return Window(reach, fn, None, 2 * c, 2 * c)


@dataclass
class StreamConvState:
    layers: Chain
    consumed: int = 0
    emitted: int = 0
    flushed: bool = False

    @classmethod
    def fresh(cls, cfg: WaveNetConfig, weights: dict, prefix: str = "wavenet") -> "StreamConvState":
        return cls(Chain([_layer_window(i, cfg, weights, prefix) for i in range(cfg.num_layers)]
                         or [_Identity(2 * cfg.channels)]))

    def buffers(self) -> list:
        return [op.buf for op in self.layers.ops if isinstance(op, Window)]


class _Identity(Window):
    def __init__(self, width):
        super().__init__(0, lambda s: s, lambda x: x, width, width)


def _finish(rows, cfg, weights, prefix):
    if rows.shape[0] == 0:
        return np.zeros((0, cfg.out_channels), K.DTYPE)
    c = cfg.channels
    return _head(rows[:, :c], rows[:, c:], cfg, weights, prefix)


def wavenet_step(frames, state: StreamConvState, cfg: WaveNetConfig, weights: dict, prefix: str = "wavenet"):
    """Feed ``n`` frames, emit every frame whose future window is complete.

    Returns ``(out, state)``; ``state`` is mutated in place.
    """
    if state.flushed:
        raise StateError("bottleneck stream already flushed")
    frames = K.as_tensor(frames)
    state.consumed += frames.shape[0]
    if frames.shape[0] == 0:
        return np.zeros((0, cfg.out_channels), K.DTYPE), state
    h = _pointwise(frames, weights, f"{prefix}.in")
    rows = state.layers.push(np.concatenate([h, np.zeros_like(h)], axis=1))
    state.emitted += rows.shape[0]
    return _finish(rows, cfg, weights, prefix), state


def wavenet_flush(state: StreamConvState, cfg: WaveNetConfig, weights: dict, prefix: str = "wavenet") -> np.ndarray:
    if state.flushed:
        raise StateError("bottleneck stream already flushed")
    state.flushed = True
    if state.consumed == 0:
        return np.zeros((0, cfg.out_channels), K.DTYPE)
    rows = state.layers.flush()
    state.emitted += rows.shape[0]
    return _finish(rows, cfg, weights, prefix)
