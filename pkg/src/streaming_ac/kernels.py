"""Deterministic float32 numeric kernels.

Every reduction here is a sequential left-to-right accumulation
(``np.cumsum`` along the reduced axis), never BLAS and never numpy's
pairwise ``sum``.  The value of an output row therefore depends only on
the input rows it reads, not on how many other rows were computed in the
same call.  The streaming/offline equivalence of the whole pipeline rests
on that property.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DimensionError, EmptyOutputError, InvalidMaskError

DTYPE = np.float32


def as_tensor(x) -> np.ndarray:
    return np.ascontiguousarray(x, dtype=DTYPE)


@dataclass(frozen=True)
class ConvSpec:
    in_channels: int
    out_channels: int
    kernel_size: int
    dilation: int = 1
    stride: int = 1
    causal: bool = False

    def __post_init__(self):
        if self.dilation < 1 or self.stride < 1 or self.kernel_size < 1:
            raise ConfigurationError(f"invalid conv spec {self}")
        if not self.causal and self.kernel_size % 2 == 0:
            raise ConfigurationError(
                f"non-causal convolution needs an odd kernel, got {self.kernel_size}"
            )

    @property
    def span(self) -> int:
        """Number of input frames covered by one output frame."""
        return self.dilation * (self.kernel_size - 1) + 1

    @property
    def half_reach(self) -> int:
        return self.dilation * (self.kernel_size - 1) // 2


def seq_sum(x: np.ndarray, axis: int = -1) -> np.ndarray:
    """Sum along ``axis`` in strict index order."""
    if x.shape[axis] == 0:
        shape = list(x.shape)
        del shape[axis]
        return np.zeros(shape, dtype=x.dtype)
    return np.take(np.cumsum(x, axis=axis, dtype=x.dtype), -1, axis=axis)


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """``a @ b`` for 2-D float32 arrays with a fixed accumulation order.

    Each output element equals ``((a[i,0]*b[0,j] + a[i,1]*b[1,j]) + ...)``
    evaluated in float32, i.e. exactly the textbook triple loop.
    """
    a = as_tensor(a)
    b = as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"cannot multiply {a.shape} by {b.shape}")
    if a.shape[1] == 0:
        return np.zeros((a.shape[0], b.shape[1]), dtype=DTYPE)
    return seq_sum(a[:, :, None] * b[None, :, :], axis=1)


def conv1d(
    x: np.ndarray,
    w: np.ndarray,
    spec: ConvSpec,
    left_pad: int = 0,
    right_pad: int = 0,
    bias: np.ndarray | None = None,
) -> np.ndarray:
    """Valid 1-D convolution over an explicitly zero-extended sequence.

    Args:
        x: input of shape ``(T, Cin)``.
        w: weights of shape ``(Cout, Cin, K)``.
        spec: kernel geometry; ``spec.causal`` is informational only, the
            caller chooses the padding.
        left_pad, right_pad: zero frames prepended/appended before the
            valid convolution.
        bias: optional ``(Cout,)`` added after accumulation.

    Returns:
        ``(T', Cout)`` with ``T' = (T + pads - dilation*(K-1) - 1)//stride + 1``.
    """
    x = as_tensor(x)
    w = as_tensor(w)
    if x.ndim != 2 or x.shape[1] != spec.in_channels:
        raise DimensionError(f"input {x.shape} does not match {spec.in_channels} channels")
    if w.shape != (spec.out_channels, spec.in_channels, spec.kernel_size):
        raise DimensionError(f"weight {w.shape} does not match {spec}")
    total = x.shape[0] + left_pad + right_pad
    if total < spec.span:
        raise EmptyOutputError(
            f"sequence of {total} padded frames is shorter than the receptive span {spec.span}"
        )
    if left_pad or right_pad:
        x = np.concatenate(
            [
                np.zeros((left_pad, spec.in_channels), DTYPE),
                x,
                np.zeros((right_pad, spec.in_channels), DTYPE),
            ]
        )
    n_out = (total - spec.span) // spec.stride + 1
    d, s = spec.dilation, spec.stride
    # (T', K, Cin) gathered taps, contracted tap-major then channel-major
    taps = np.stack(
        [x[j * d : j * d + (n_out - 1) * s + 1 : s] for j in range(spec.kernel_size)], axis=1
    )
    cols = taps.reshape(n_out, spec.kernel_size * spec.in_channels)
    wmat = w.transpose(2, 1, 0).reshape(spec.kernel_size * spec.in_channels, spec.out_channels)
    out = matmul(cols, wmat)
    if bias is not None:
        out = out + as_tensor(bias)
    return out


def scatter_frames(
    acc: np.ndarray, offset: int, x: np.ndarray, w: np.ndarray, factor: int
) -> None:
    """Overlap-add frames ``x`` into ``acc`` in place, frame t at ``offset + t*factor``.

    Taps are visited from last to first so that every output position
    receives its contributions in increasing frame order.
    """
    n = x.shape[0]
    if n == 0:
        return
    kernel = w.shape[2]
    for i in range(kernel - 1, -1, -1):
        start = offset + i
        acc[start : start + (n - 1) * factor + 1 : factor] += matmul(x, w[:, :, i])


def conv1d_transposed(
    x: np.ndarray, w: np.ndarray, factor: int, bias: np.ndarray | None = None
) -> np.ndarray:
    """Transposed 1-D convolution (upsampling by ``factor``), untrimmed.

    ``x`` is ``(T, Cin)``, ``w`` is ``(Cin, Cout, K)``; the result has
    ``T*factor + K - factor`` rows.
    """
    x = as_tensor(x)
    w = as_tensor(w)
    if w.ndim != 3 or x.ndim != 2 or x.shape[1] != w.shape[0]:
        raise DimensionError(f"input {x.shape} does not match weight {w.shape}")
    kernel = w.shape[2]
    if factor < 1 or kernel < factor:
        raise ConfigurationError(
            f"transposed kernel {kernel} must be >= upsample factor {factor}"
        )
    t = x.shape[0]
    out = np.zeros((t * factor + kernel - factor, w.shape[1]), DTYPE)
    scatter_frames(out, 0, x, w, factor)
    if bias is not None:
        out = out + as_tensor(bias)
    return out


def softmax_rows(scores: np.ndarray, allowed: np.ndarray | None = None) -> np.ndarray:
    """Softmax over the last axis restricted to ``allowed`` positions."""
    if allowed is not None:
        scores = np.where(allowed, scores, -np.inf)
    m = np.max(scores, axis=-1, keepdims=True)
    e = np.exp(np.ascontiguousarray(scores - m))
    return e / seq_sum(e, axis=-1)[..., None]


def masked_softmax_attention(
    q: np.ndarray, k: np.ndarray, v: np.ndarray, mask: np.ndarray | None = None
) -> np.ndarray:
    """Single-head scaled dot-product attention with a boolean allow mask.

    Leading batch axes are allowed (e.g. heads); the last two axes are
    ``(Tq, d)`` for ``q`` and ``(Tk, d)`` for ``k``/``v``.
    """
    q, k, v = as_tensor(q), as_tensor(k), as_tensor(v)
    if q.shape[-1] != k.shape[-1] or k.shape[-2] != v.shape[-2]:
        raise DimensionError(f"incompatible q {q.shape}, k {k.shape}, v {v.shape}")
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape[-2:] != (q.shape[-2], k.shape[-2]):
            raise DimensionError(f"mask {mask.shape} does not match scores")
        if not np.all(np.any(mask, axis=-1)):
            raise InvalidMaskError("a query row has no allowed key")
    if k.shape[-2] == 0:
        raise InvalidMaskError("attention over zero keys")
    scale = DTYPE(1.0 / math.sqrt(q.shape[-1]))
    scores = seq_sum(q[..., :, None, :] * k[..., None, :, :], axis=-1) * scale
    p = softmax_rows(scores, mask)
    return seq_sum(p[..., :, :, None] * v[..., None, :, :], axis=-2)


def layer_norm(x: np.ndarray, gamma: np.ndarray, beta: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    n = DTYPE(x.shape[-1])
    mean = seq_sum(x, axis=-1)[..., None] / n
    c = x - mean
    var = seq_sum(c * c, axis=-1)[..., None] / n
    return c / np.sqrt(var + DTYPE(eps)) * gamma + beta


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, DTYPE(0))


def leaky_relu(x: np.ndarray, slope: float = 0.1) -> np.ndarray:
    return np.where(x > 0, x, x * DTYPE(slope))


def tanh(x: np.ndarray) -> np.ndarray:
    return np.tanh(np.ascontiguousarray(x))


def sigmoid(x: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        return DTYPE(1) / (DTYPE(1) + np.exp(-np.ascontiguousarray(x)))
