"""Composable streaming operators for fully convolutional stacks.

Each operator supports three things:

* ``offline(x)`` -- whole-sequence reference with symmetric zero padding,
* ``push(x)`` / ``flush()`` -- incremental processing that emits every output
  frame as soon as all the input it depends on has arrived,
* ``needed(p)`` -- the last input index required by output index ``p``
  (static look-ahead analysis).

Operators are stateful; build a fresh graph per stream.
"""

from __future__ import annotations

import numpy as np

from . import kernels as K
from .errors import StateError


class Op:
    width: int

    def offline(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def push(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def flush(self) -> np.ndarray:
        raise NotImplementedError

    def needed(self, p: int) -> int:
        raise NotImplementedError

    def _empty(self):
        return np.zeros((0, self.width), K.DTYPE)


class Pointwise(Op):
    def __init__(self, fn, width: int):
        self.fn = fn
        self.width = width

    def offline(self, x):
        return self.fn(x)

    def push(self, x):
        return self.fn(x) if x.shape[0] else self._empty()

    def flush(self):
        return self._empty()

    def needed(self, p):
        return p


class Window(Op):
    """Symmetric window of ``reach`` frames each side.

    ``fn(seq)`` must map a sequence of ``n`` frames to the ``n - 2*reach``
    outputs centred on ``seq[reach:n-reach]`` and be row independent.
    ``offline_fn(x)`` is the independent whole-sequence form (padding
    handled by the caller of the kernel).
    """

    def __init__(self, reach: int, fn, offline_fn, in_width: int, width: int):
        self.reach = reach
        self.fn = fn
        self.offline_fn = offline_fn
        self.in_width = in_width
        self.width = width
        # stream-start zeros stand in for the offline left padding
        self.buf = np.zeros((reach, in_width), K.DTYPE)
        self.flushed = False

    def offline(self, x):
        return self.offline_fn(x)

    def push(self, x):
        if self.flushed:
            raise StateError("stream already flushed")
        self.buf = np.concatenate([self.buf, K.as_tensor(x)])
        n_out = self.buf.shape[0] - 2 * self.reach
        if n_out <= 0:
            return self._empty()
        y = self.fn(self.buf)
        self.buf = self.buf[n_out:]
        return y

    def flush(self):
        if self.flushed:
            raise StateError("stream already flushed")
        tail = self.push(np.zeros((self.reach, self.in_width), K.DTYPE))
        self.flushed = True
        return tail

    def needed(self, p):
        return p + self.reach

    def consumed_frames(self) -> int:
        return self.buf.shape[0]


class Upsample(Op):
    """Transposed convolution by ``factor`` trimmed to exactly ``T*factor`` outputs.

    The untrimmed output has ``K - factor`` extra samples; ``(K-factor)//2``
    are dropped at the start and the rest at the end.  Streaming keeps an
    overlap-add accumulator for raw positions not yet final.
    """

    def __init__(self, w, bias, factor: int):
        self.w = K.as_tensor(w)
        self.bias = K.as_tensor(bias)
        self.factor = factor
        self.kernel = self.w.shape[2]
        self.width = self.w.shape[1]
        self.trim = (self.kernel - factor) // 2
        self.frames_in = 0
        self.base = 0  # raw index of acc[0]
        self.acc = np.zeros((0, self.width), K.DTYPE)
        self.flushed = False

    def offline(self, x):
        t = x.shape[0]
        raw = K.conv1d_transposed(x, self.w, self.factor, self.bias)
        return raw[self.trim : self.trim + t * self.factor]

    def _emit(self, upto: int):
        start = max(self.base, self.trim)
        if upto <= start:
            return self._empty()
        out = self.acc[start - self.base : upto - self.base] + self.bias
        self.acc = self.acc[upto - self.base :]
        self.base = upto
        return out

    def push(self, x):
        if self.flushed:
            raise StateError("stream already flushed")
        n = x.shape[0]
        if n == 0:
            return self._empty()
        end = (self.frames_in + n) * self.factor + self.kernel - self.factor
        grow = end - self.base - self.acc.shape[0]
        self.acc = np.concatenate([self.acc, np.zeros((grow, self.width), K.DTYPE)])
        K.scatter_frames(self.acc, self.frames_in * self.factor - self.base, x, self.w, self.factor)
        self.frames_in += n
        return self._emit(self.frames_in * self.factor)

    def flush(self):
        if self.flushed:
            raise StateError("stream already flushed")
        self.flushed = True
        if self.frames_in == 0:
            return self._empty()
        return self._emit(self.trim + self.frames_in * self.factor)

    def needed(self, p):
        return (p + self.trim) // self.factor


class Chain(Op):
    def __init__(self, ops: list):
        self.ops = list(ops)
        self.width = self.ops[-1].width

    def offline(self, x):
        for op in self.ops:
            x = op.offline(x)
        return x

    def push(self, x):
        for op in self.ops:
            x = op.push(x)
        return x

    def flush(self):
        out = []
        for i, op in enumerate(self.ops):
            y = op.flush()
            for later in self.ops[i + 1 :]:
                y = later.push(y)
            out.append(y)
        return np.concatenate(out)

    def needed(self, p):
        for op in reversed(self.ops):
            p = op.needed(p)
        return p


class MeanOf(Op):
    """Average of parallel branches fed the same input, aligned frame by frame."""

    def __init__(self, branches: list):
        self.branches = list(branches)
        self.width = self.branches[0].width
        self.queues = [self._empty() for _ in self.branches]

    def _combine(self, ys):
        acc = ys[0]
        for y in ys[1:]:
            acc = acc + y
        return acc / K.DTYPE(len(ys))

    def offline(self, x):
        return self._combine([b.offline(x) for b in self.branches])

    def _drain(self):
        n = min(q.shape[0] for q in self.queues)
        ys = [q[:n] for q in self.queues]
        self.queues = [q[n:] for q in self.queues]
        return self._combine(ys)

    def push(self, x):
        self.queues = [np.concatenate([q, b.push(x)]) for q, b in zip(self.queues, self.branches)]
        return self._drain()

    def flush(self):
        self.queues = [np.concatenate([q, b.flush()]) for q, b in zip(self.queues, self.branches)]
        return self._drain()

    def needed(self, p):
        return max(b.needed(p) for b in self.branches)


def conv_window(w, b, dilation: int = 1, pre=None, residual: bool = False) -> Window:
    """Same-length non-causal convolution as a streaming ``Window``.

    ``pre`` is an elementwise activation applied to the input before the
    convolution; with ``residual`` the (unactivated) centre frame is added
    to the output.
    """
    w = K.as_tensor(w)
    cout, cin, k = w.shape
    spec = K.ConvSpec(cin, cout, k, dilation)
    reach = spec.half_reach
    act = pre if pre is not None else (lambda x: x)

    def fn(seq):
        y = K.conv1d(act(seq), w, spec, bias=b)
        if residual:
            y = y + seq[reach : seq.shape[0] - reach]
        return y

    def offline_fn(x):
        y = K.conv1d(act(x), w, spec, left_pad=reach, right_pad=reach, bias=b)
        if residual:
            y = y + x
        return y

    return Window(reach, fn, offline_fn, cin, cout)
