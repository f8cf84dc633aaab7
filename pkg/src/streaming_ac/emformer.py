"""Segment-attention content encoder (Emformer style) with a cached streaming step.

Each segment of ``S`` frames is processed together with a copy of the next
``R`` input frames (its right context) and attends to the cached keys and
values of the previous ``L`` frames of the same layer.  Right-context
copies are recomputed per segment at every layer, so a segment's output
never depends on input beyond ``segment_end + R``.

There is no memory bank and no positional encoding.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels as K
from .errors import ChunkingError, ConfigurationError, DimensionError, InvalidMaskError, StateError


@dataclass(frozen=True)
class EmformerConfig:
    num_layers: int = 2
    hidden: int = 16
    heads: int = 2
    segment: int = 4
    left_context: int = 8
    right_context: int = 4
    ff_dim: int = 32

    def __post_init__(self):
        if self.hidden % self.heads:
            raise ConfigurationError("hidden must be divisible by heads")
        if self.segment < 1 or self.left_context < 0 or self.right_context < 0:
            raise ConfigurationError(f"invalid segment geometry in {self}")
        if self.num_layers < 0:
            raise ConfigurationError("num_layers must be >= 0")


LAYER_PARAMS = ("ln1.g", "ln1.b", "wq", "bq", "wk", "bk", "wv", "bv", "wo", "bo",
                "ln2.g", "ln2.b", "w1", "b1", "w2", "b2")


def init_weights(cfg: EmformerConfig, rng: np.random.Generator, prefix: str = "emformer") -> dict:
    def uni(shape, fan_in):
        bound = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=shape).astype(K.DTYPE)

    h, f = cfg.hidden, cfg.ff_dim
    w = {}
    for layer in range(cfg.num_layers):
        p = f"{prefix}.{layer}."
        w[p + "ln1.g"] = np.ones(h, K.DTYPE)
        w[p + "ln1.b"] = np.zeros(h, K.DTYPE)
        for name in ("q", "k", "v", "o"):
            w[p + "w" + name] = uni((h, h), h)
            w[p + "b" + name] = uni((h,), h)
        w[p + "ln2.g"] = np.ones(h, K.DTYPE)
        w[p + "ln2.b"] = np.zeros(h, K.DTYPE)
        w[p + "w1"] = uni((h, f), h)
        w[p + "b1"] = uni((f,), h)
        w[p + "w2"] = uni((f, h), f)
        w[p + "b2"] = uni((h,), f)
    return w


def _layer(weights, layer, prefix="emformer"):
    p = f"{prefix}.{layer}."
    return {name: weights[p + name] for name in LAYER_PARAMS}


def _split_heads(x: np.ndarray, heads: int) -> np.ndarray:
    n, h = x.shape
    return np.ascontiguousarray(x.reshape(n, heads, h // heads).transpose(1, 0, 2))


def _merge_heads(x: np.ndarray) -> np.ndarray:
    heads, n, d = x.shape
    return np.ascontiguousarray(x.transpose(1, 0, 2).reshape(n, heads * d))


def _project_kv(x, lw):
    xn = K.layer_norm(x, lw["ln1.g"], lw["ln1.b"])
    return xn, K.matmul(xn, lw["wk"]) + lw["bk"], K.matmul(xn, lw["wv"]) + lw["bv"]


def _block_layer(x, left_k, left_v, lw, cfg):
    """One layer over a segment block; returns (output, block keys, block values)."""
    xn, k, v = _project_kv(x, lw)
    q = K.matmul(xn, lw["wq"]) + lw["bq"]
    keys = np.concatenate([left_k, k])
    values = np.concatenate([left_v, v])
    att = K.masked_softmax_attention(
        _split_heads(q, cfg.heads), _split_heads(keys, cfg.heads), _split_heads(values, cfg.heads)
    )
    y = x + K.matmul(_merge_heads(att), lw["wo"]) + lw["bo"]
    yn = K.layer_norm(y, lw["ln2.g"], lw["ln2.b"])
    ff = K.matmul(K.relu(K.matmul(yn, lw["w1"]) + lw["b1"]), lw["w2"]) + lw["b2"]
    return y + ff, k, v


# ---------------------------------------------------------------------------
# masks


@dataclass(frozen=True)
class AttentionBlockMask:
    """Segment-granular allow pattern over ``T`` frames."""

    length: int
    segment: int
    left_context: int
    right_context: int

    @property
    def num_blocks(self) -> int:
        return -(-self.length // self.segment)

    def query_range(self, block: int) -> tuple[int, int]:
        start = block * self.segment
        return start, min(self.length, start + self.segment)

    def key_range(self, block: int) -> tuple[int, int]:
        start = block * self.segment
        return (
            max(0, start - self.left_context),
            min(self.length, start + self.segment + self.right_context),
        )

    def dense(self) -> np.ndarray:
        allow = np.zeros((self.length, self.length), dtype=bool)
        for b in range(self.num_blocks):
            q0, q1 = self.query_range(b)
            k0, k1 = self.key_range(b)
            allow[q0:q1, k0:k1] = True
        return allow

    def allowed_count(self) -> int:
        total = 0
        for b in range(self.num_blocks):
            q0, q1 = self.query_range(b)
            k0, k1 = self.key_range(b)
            total += (q1 - q0) * (k1 - k0)
        return total


def build_block_mask(length: int, cfg: EmformerConfig) -> AttentionBlockMask:
    if length < 1:
        raise DimensionError("mask length must be >= 1")
    return AttentionBlockMask(length, cfg.segment, cfg.left_context, cfg.right_context)


def mask_sparsity(mask) -> float:
    """Fraction of disallowed entries; accepts a block mask or a boolean matrix."""
    if isinstance(mask, AttentionBlockMask):
        return 1.0 - mask.allowed_count() / float(mask.length * mask.length)
    mask = np.asarray(mask, dtype=bool)
    if mask.size == 0:
        return 0.0
    return float(np.count_nonzero(~mask)) / mask.size


def blocksparse_attention(q, k, v, mask: AttentionBlockMask) -> np.ndarray:
    """Masked attention computed block by block over the allowed key ranges only."""
    q, k, v = K.as_tensor(q), K.as_tensor(k), K.as_tensor(v)
    if q.shape[-2] != mask.length or k.shape[-2] != mask.length:
        raise DimensionError(f"block mask of length {mask.length} does not fit q {q.shape}")
    out = np.empty(q.shape[:-1] + (v.shape[-1],), K.DTYPE)
    for b in range(mask.num_blocks):
        q0, q1 = mask.query_range(b)
        k0, k1 = mask.key_range(b)
        if k1 <= k0:
            raise InvalidMaskError(f"block {b} has no allowed keys")
        out[..., q0:q1, :] = K.masked_softmax_attention(
            q[..., q0:q1, :], k[..., k0:k1, :], v[..., k0:k1, :]
        )
    return out


# ---------------------------------------------------------------------------
# offline reference


def emformer_offline(x: np.ndarray, cfg: EmformerConfig, weights: dict) -> np.ndarray:
    """Full-utterance forward, computed layer by layer.

    At each layer the keys/values of every segment frame are projected once
    over the whole sequence and the left context is read from them through
    the block mask's key ranges; right-context frames are per-segment copies
    carried up the stack.
    """
    x = K.as_tensor(x)
    if x.ndim != 2 or x.shape[1] != cfg.hidden:
        raise DimensionError(f"expected (T, {cfg.hidden}) input, got {x.shape}")
    t = x.shape[0]
    if t % cfg.segment:
        raise DimensionError(f"T={t} is not a multiple of the segment size {cfg.segment}")
    if t == 0:
        return x.copy()
    mask = build_block_mask(t, cfg)
    s = cfg.segment
    # right-context copies, one per segment, at the current layer's input
    rc = [x[(b + 1) * s : mask.key_range(b)[1]] for b in range(mask.num_blocks)]
    h = x
    for layer in range(cfg.num_layers):
        lw = _layer(weights, layer)
        _, k_all, v_all = _project_kv(h, lw)
        nxt = np.empty_like(h)
        nxt_rc = []
        for b in range(mask.num_blocks):
            q0, q1 = mask.query_range(b)
            k0, _ = mask.key_range(b)
            block = np.concatenate([h[q0:q1], rc[b]])
            out, _, _ = _block_layer(block, k_all[k0:q0], v_all[k0:q0], lw, cfg)
            nxt[q0:q1] = out[: q1 - q0]
            nxt_rc.append(out[q1 - q0 :])
        h, rc = nxt, nxt_rc
    return h


# ---------------------------------------------------------------------------
# streaming


@dataclass
class EmformerState:
    cache_k: list = field(default_factory=list)
    cache_v: list = field(default_factory=list)
    pending: np.ndarray | None = None
    frames_in: int = 0
    segments_out: int = 0
    flushed: bool = False

    @classmethod
    def fresh(cls, cfg: EmformerConfig) -> "EmformerState":
        empty = np.zeros((0, cfg.hidden), K.DTYPE)
        return cls(
            cache_k=[empty] * cfg.num_layers,
            cache_v=[empty] * cfg.num_layers,
            pending=empty,
        )


def _emit_segment(state: EmformerState, cfg: EmformerConfig, weights: dict, rc_len: int):
    s = cfg.segment
    block = state.pending[: s + rc_len]
    for layer in range(cfg.num_layers):
        lw = _layer(weights, layer)
        block, k, v = _block_layer(block, state.cache_k[layer], state.cache_v[layer], lw, cfg)
        if cfg.left_context:
            state.cache_k[layer] = np.concatenate([state.cache_k[layer], k[:s]])[-cfg.left_context :]
            state.cache_v[layer] = np.concatenate([state.cache_v[layer], v[:s]])[-cfg.left_context :]
    state.pending = state.pending[s:]
    state.segments_out += 1
    return block[:s]


def emformer_step(new_frames, state: EmformerState, cfg: EmformerConfig, weights: dict):
    """Consume exactly one segment of input frames.

    Returns ``(out, state)`` where ``out`` holds the output of every segment
    whose right context became complete (usually zero or one segment).
    ``state`` is updated in place and returned for convenience.
    """
    if state.flushed:
        raise StateError("emformer state already flushed")
    new_frames = K.as_tensor(new_frames)
    if new_frames.shape != (cfg.segment, cfg.hidden):
        raise ChunkingError(
            f"expected exactly ({cfg.segment}, {cfg.hidden}) frames, got {new_frames.shape}"
        )
    state.pending = np.concatenate([state.pending, new_frames])
    state.frames_in += cfg.segment
    outs = []
    s, r = cfg.segment, cfg.right_context
    while (state.segments_out + 1) * s + r <= state.frames_in:
        outs.append(_emit_segment(state, cfg, weights, r))
    if outs:
        return np.concatenate(outs), state
    return np.zeros((0, cfg.hidden), K.DTYPE), state


def emformer_flush(state: EmformerState, cfg: EmformerConfig, weights: dict) -> np.ndarray:
    """Emit the remaining segments with their right context truncated at end of stream."""
    if state.flushed:
        raise StateError("emformer state already flushed")
    state.flushed = True
    outs = [np.zeros((0, cfg.hidden), K.DTYPE)]
    s = cfg.segment
    while state.pending.shape[0] > 0:
        rc_len = min(cfg.right_context, state.pending.shape[0] - s)
        outs.append(_emit_segment(state, cfg, weights, rc_len))
    return np.concatenate(outs)
