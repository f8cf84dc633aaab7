"""HiFi-GAN style decoder: feature frames to waveform, with streaming overlap-add.

Topology per stage: leaky ReLU, transposed convolution (upsample), then a
multi-receptive-field block averaging residual blocks of dilated convs.
A pre convolution precedes the stages and a post convolution (plus
optional tanh) follows them.  The speaker embedding enters through a
learned projection added to every input frame.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels as K
from .errors import ConfigurationError, MisuseError, StateError
from .streams import Chain, MeanOf, Pointwise, Upsample, conv_window

LRELU_SLOPE = 0.1


@dataclass(frozen=True)
class VocoderConfig:
    in_channels: int = 16
    channels: int = 32
    factors: tuple = (8, 8, 5)
    upsample_kernels: tuple = (16, 16, 10)
    resblock_kernels: tuple = (3,)
    resblock_dilations: tuple = ((1, 3),)
    pre_kernel: int = 7
    post_kernel: int = 7
    embed_dim: int = 32
    output_activation: str = "tanh"

    def __post_init__(self):
        object.__setattr__(self, "factors", tuple(int(f) for f in self.factors))
        object.__setattr__(self, "upsample_kernels", tuple(int(k) for k in self.upsample_kernels))
        object.__setattr__(self, "resblock_kernels", tuple(int(k) for k in self.resblock_kernels))
        object.__setattr__(
            self, "resblock_dilations", tuple(tuple(int(d) for d in ds) for ds in self.resblock_dilations)
        )
        if len(self.factors) != len(self.upsample_kernels):
            raise ConfigurationError("one transposed kernel per upsample factor is required")
        for f, k in zip(self.factors, self.upsample_kernels):
            if k < f:
                raise ConfigurationError(f"transposed kernel {k} shorter than factor {f}")
        if len(self.resblock_kernels) != len(self.resblock_dilations):
            raise ConfigurationError("one dilation set per resblock kernel is required")
        for k in (*self.resblock_kernels, self.pre_kernel, self.post_kernel):
            if k % 2 == 0:
                raise ConfigurationError(f"non-causal kernel sizes must be odd, got {k}")
        if self.output_activation not in ("tanh", "none"):
            raise ConfigurationError(f"unknown output activation {self.output_activation!r}")

    @property
    def hop(self) -> int:
        return math.prod(self.factors)

    def stage_channels(self, stage: int) -> int:
        return max(1, self.channels // 2 ** (stage + 1))


def init_weights(cfg: VocoderConfig, rng: np.random.Generator, prefix: str = "vocoder") -> dict:
    def uni(shape, fan_in):
        bound = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=shape).astype(K.DTYPE)

    w = {
        f"{prefix}.cond.w": uni((cfg.embed_dim, cfg.in_channels), cfg.embed_dim),
        f"{prefix}.pre.w": uni((cfg.channels, cfg.in_channels, cfg.pre_kernel), cfg.in_channels * cfg.pre_kernel),
        f"{prefix}.pre.b": uni((cfg.channels,), cfg.in_channels * cfg.pre_kernel),
    }
    cin = cfg.channels
    for s, (f, k) in enumerate(zip(cfg.factors, cfg.upsample_kernels)):
        cout = cfg.stage_channels(s)
        w[f"{prefix}.up{s}.w"] = uni((cin, cout, k), cin * k // f)
        w[f"{prefix}.up{s}.b"] = uni((cout,), cin * k // f)
        for r, (rk, dils) in enumerate(zip(cfg.resblock_kernels, cfg.resblock_dilations)):
            for j, _ in enumerate(dils):
                w[f"{prefix}.res{s}.{r}.{j}.w"] = uni((cout, cout, rk), cout * rk)
                w[f"{prefix}.res{s}.{r}.{j}.b"] = uni((cout,), cout * rk)
        cin = cout
    w[f"{prefix}.post.w"] = uni((1, cin, cfg.post_kernel), cin * cfg.post_kernel)
    w[f"{prefix}.post.b"] = uni((1,), cin * cfg.post_kernel)
    return w


def _lrelu(x):
    return K.leaky_relu(x, LRELU_SLOPE)


def build_graph(cfg: VocoderConfig, weights: dict, prefix: str = "vocoder") -> Chain:
    """Operator graph from conditioned features to samples (shape ``(n, 1)``)."""
    ops = [conv_window(weights[f"{prefix}.pre.w"], weights[f"{prefix}.pre.b"])]
    width = cfg.channels
    for s, f in enumerate(cfg.factors):
        ops.append(Pointwise(_lrelu, width))
        ops.append(Upsample(weights[f"{prefix}.up{s}.w"], weights[f"{prefix}.up{s}.b"], f))
        width = cfg.stage_channels(s)
        blocks = []
        for r, dils in enumerate(cfg.resblock_dilations):
            blocks.append(
                Chain(
                    [
                        conv_window(
                            weights[f"{prefix}.res{s}.{r}.{j}.w"],
                            weights[f"{prefix}.res{s}.{r}.{j}.b"],
                            dilation=d,
                            pre=_lrelu,
                            residual=True,
                        )
                        for j, d in enumerate(dils)
                    ]
                )
            )
        if blocks:
            ops.append(MeanOf(blocks))
    ops.append(Pointwise(_lrelu, width))
    ops.append(conv_window(weights[f"{prefix}.post.w"], weights[f"{prefix}.post.b"]))
    if cfg.output_activation == "tanh":
        ops.append(Pointwise(K.tanh, 1))
    return Chain(ops)


def future_reach(cfg: VocoderConfig, weights: dict | None = None) -> int:
    """Look-ahead of the decoder in feature frames (static analysis of the graph)."""
    graph = build_graph(cfg, weights if weights is not None else _shape_only_weights(cfg))
    hop = cfg.hop
    base = 64 * hop
    return max(graph.needed(p) - p // hop for p in range(base, base + hop))


def _shape_only_weights(cfg):
    return init_weights(cfg, np.random.default_rng(0))


def condition(feat: np.ndarray, g: np.ndarray, weights: dict, prefix: str = "vocoder") -> np.ndarray:
    """Add the projected speaker embedding to every feature frame."""
    cond = K.matmul(K.as_tensor(g)[None, :], weights[f"{prefix}.cond.w"])
    return K.as_tensor(feat) + cond


def vocoder_offline(feat, g, cfg: VocoderConfig, weights: dict, prefix: str = "vocoder") -> np.ndarray:
    """Decode ``T`` frames into exactly ``T*hop`` samples."""
    feat = K.as_tensor(feat)
    if feat.shape[0] == 0:
        return np.zeros(0, K.DTYPE)
    graph = build_graph(cfg, weights, prefix)
    return graph.offline(condition(feat, g, weights, prefix))[:, 0]


@dataclass
class VocoderState:
    graph: Chain
    g: np.ndarray | None = None
    frames_in: int = 0
    samples_out: int = 0
    pending: np.ndarray = field(default_factory=lambda: np.zeros(0, K.DTYPE))
    flushed: bool = False

    @classmethod
    def fresh(cls, cfg: VocoderConfig, weights: dict, prefix: str = "vocoder") -> "VocoderState":
        return cls(build_graph(cfg, weights, prefix))


def _check_g(state: VocoderState, g):
    if state.g is None:
        state.g = g
    elif g is not state.g and not np.array_equal(g, state.g):
        raise MisuseError("speaker embedding changed within a session")


def _release(state: VocoderState, samples: np.ndarray, hop: int, final: bool) -> np.ndarray:
    state.pending = np.concatenate([state.pending, samples])
    n = state.pending.shape[0] if final else (state.pending.shape[0] // hop) * hop
    out, state.pending = state.pending[:n], state.pending[n:]
    state.samples_out += n
    return out


def vocoder_step(feat_frames, g, state: VocoderState, cfg: VocoderConfig, weights: dict, prefix: str = "vocoder"):
    """Feed frames; return ``(samples, state)`` for every fully resolved frame."""
    if state.flushed:
        raise StateError("vocoder stream already flushed")
    _check_g(state, g)
    feat_frames = K.as_tensor(feat_frames)
    state.frames_in += feat_frames.shape[0]
    if feat_frames.shape[0] == 0:
        return np.zeros(0, K.DTYPE), state
    y = state.graph.push(condition(feat_frames, state.g, weights, prefix))
    return _release(state, y[:, 0], cfg.hop, final=False), state


def vocoder_flush(state: VocoderState, g, cfg: VocoderConfig, weights: dict, prefix: str = "vocoder") -> np.ndarray:
    if state.flushed:
        raise StateError("vocoder stream already flushed")
    _check_g(state, g)
    state.flushed = True
    if state.frames_in == 0:
        return np.zeros(0, K.DTYPE)
    return _release(state, state.graph.flush()[:, 0], cfg.hop, final=True)
