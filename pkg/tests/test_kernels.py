import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from streaming_ac import kernels as K
from streaming_ac.errors import ConfigurationError, DimensionError, EmptyOutputError, InvalidMaskError


def triple_loop(a, b):
    m, k = a.shape
    n = b.shape[1]
    out = np.zeros((m, n), np.float32)
    for i in range(m):
        for j in range(n):
            acc = np.float32(0)
            for t in range(k):
                acc = np.float32(acc + np.float32(a[i, t] * b[t, j]))
            out[i, j] = acc
    return out


def direct_conv(x, w, dilation, left, right):
    x = np.concatenate([np.zeros((left, x.shape[1])), x, np.zeros((right, x.shape[1]))]).astype(np.float64)
    cout, cin, k = w.shape
    n = x.shape[0] - dilation * (k - 1)
    out = np.zeros((n, cout))
    for t in range(n):
        for o in range(cout):
            out[t, o] = sum(x[t + j * dilation, c] * w[o, c, j] for j in range(k) for c in range(cin))
    return out


def scatter_oracle(x, w, factor):
    t, cin = x.shape
    _, cout, k = w.shape
    out = np.zeros((t * factor + k - factor, cout))
    for i in range(t):
        for j in range(k):
            out[i * factor + j] += x[i].astype(np.float64) @ w[:, :, j].astype(np.float64)
    return out


def softmax_oracle(q, k, v, mask):
    out = np.zeros((q.shape[0], v.shape[1]))
    for i in range(q.shape[0]):
        idx = np.flatnonzero(mask[i])
        s = np.array([q[i].astype(np.float64) @ k[j] for j in idx]) / math.sqrt(q.shape[1])
        p = np.exp(s - s.max())
        p /= p.sum()
        out[i] = p @ v[idx].astype(np.float64)
    return out


class TestMatmul:
    def test_identity(self, rng):
        b = rng.standard_normal((3, 5)).astype(np.float32)
        np.testing.assert_array_equal(K.matmul(np.eye(3), b), b)

    def test_hand_computed(self):
        np.testing.assert_array_equal(K.matmul([[1, 2], [3, 4]], [[1], [1]]), [[3], [7]])

    def test_matches_triple_loop_exactly(self, rng):
        a = rng.standard_normal((8, 8)).astype(np.float32)
        b = rng.standard_normal((8, 8)).astype(np.float32)
        np.testing.assert_array_equal(K.matmul(a, b), triple_loop(a, b))

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            K.matmul(np.zeros((2, 3)), np.zeros((2, 3)))

    def test_repeatable(self, rng):
        a = rng.standard_normal((17, 33)).astype(np.float32)
        b = rng.standard_normal((33, 9)).astype(np.float32)
        assert K.matmul(a, b).tobytes() == K.matmul(a, b).tobytes()

    @settings(max_examples=30, deadline=None)
    @given(m=st.integers(1, 12), k=st.integers(1, 40), n=st.integers(1, 6), seed=st.integers(0, 10**6))
    def test_rows_independent_of_batch(self, m, k, n, seed):
        r = np.random.default_rng(seed)
        a = r.standard_normal((m, k)).astype(np.float32)
        b = r.standard_normal((k, n)).astype(np.float32)
        full = K.matmul(a, b)
        for i in range(m):
            np.testing.assert_array_equal(full[i : i + 1], K.matmul(a[i : i + 1], b))


class TestConv1d:
    def test_pointwise_identity(self, rng):
        x = rng.standard_normal((10, 3)).astype(np.float32)
        w = np.eye(3, dtype=np.float32)[:, :, None]
        np.testing.assert_array_equal(K.conv1d(x, w, K.ConvSpec(3, 3, 1)), x)

    def test_hand_computed(self):
        y = K.conv1d([[0], [1], [0]], np.ones((1, 1, 3)), K.ConvSpec(1, 1, 3))
        np.testing.assert_array_equal(y, [[1]])

    def test_dilated_matches_direct_sum(self, rng):
        x = rng.standard_normal((32, 2)).astype(np.float32)
        w = rng.standard_normal((3, 2, 3)).astype(np.float32)
        y = K.conv1d(x, w, K.ConvSpec(2, 3, 3, dilation=4), left_pad=4, right_pad=4)
        assert y.shape == (32, 3)
        np.testing.assert_allclose(y, direct_conv(x, w, 4, 4, 4), atol=1e-6, rtol=0)

    def test_stride_output_length(self, rng):
        x = rng.standard_normal((20, 1)).astype(np.float32)
        spec = K.ConvSpec(1, 1, 3, dilation=2, stride=3)
        y = K.conv1d(x, np.ones((1, 1, 3)), spec, left_pad=1, right_pad=2)
        assert y.shape[0] == (20 + 3 - 2 * 2 - 1) // 3 + 1
        ref = direct_conv(x, np.ones((1, 1, 3)), 2, 1, 2)[::3]
        np.testing.assert_allclose(y, ref, atol=1e-6)

    def test_too_short(self):
        with pytest.raises(EmptyOutputError):
            K.conv1d(np.zeros((2, 1)), np.zeros((1, 1, 3)), K.ConvSpec(1, 1, 3))

    def test_even_noncausal_kernel_rejected(self):
        with pytest.raises(ConfigurationError):
            K.ConvSpec(1, 1, 4)
        K.ConvSpec(1, 1, 4, causal=True)

    @settings(max_examples=25, deadline=None)
    @given(t=st.integers(1, 20), k=st.sampled_from([1, 3, 5]), d=st.integers(1, 4),
           left=st.integers(0, 6), right=st.integers(0, 6), seed=st.integers(0, 10**6))
    def test_padding_equivalence(self, t, k, d, left, right, seed):
        r = np.random.default_rng(seed)
        spec = K.ConvSpec(2, 2, k, d)
        if t + left + right < spec.span:
            return
        x = r.standard_normal((t, 2)).astype(np.float32)
        w = r.standard_normal((2, 2, k)).astype(np.float32)
        ext = np.concatenate([np.zeros((left, 2)), x, np.zeros((right, 2))]).astype(np.float32)
        np.testing.assert_array_equal(K.conv1d(x, w, spec, left, right), K.conv1d(ext, w, spec))


class TestTransposed:
    def test_single_frame_scatter(self, rng):
        w = rng.standard_normal((1, 1, 2)).astype(np.float32)
        y = K.conv1d_transposed([[2.0]], w, 2)
        np.testing.assert_array_equal(y[:, 0], 2.0 * w[0, 0])

    def test_hand_overlap_add(self):
        y = K.conv1d_transposed([[1.0], [1.0]], np.ones((1, 1, 4)), 2)
        np.testing.assert_array_equal(y[:, 0], [1, 1, 2, 2, 1, 1])

    def test_matches_scatter_oracle(self, rng):
        x = rng.standard_normal((16, 3)).astype(np.float32)
        w = rng.standard_normal((3, 2, 8)).astype(np.float32)
        y = K.conv1d_transposed(x, w, 4)
        assert y.shape == (16 * 4 + 4, 2)
        np.testing.assert_allclose(y, scatter_oracle(x, w, 4), atol=1e-6, rtol=0)

    def test_kernel_shorter_than_factor(self):
        with pytest.raises(ConfigurationError):
            K.conv1d_transposed(np.zeros((2, 1)), np.zeros((1, 1, 2)), 3)


class TestAttention:
    def test_single_key(self, rng):
        q = rng.standard_normal((3, 4)).astype(np.float32)
        k = rng.standard_normal((1, 4)).astype(np.float32)
        v = rng.standard_normal((1, 4)).astype(np.float32)
        out = K.masked_softmax_attention(q, k, v, np.ones((3, 1), bool))
        np.testing.assert_allclose(out, np.repeat(v, 3, axis=0), rtol=0, atol=1e-7)

    def test_uniform_scores_average_allowed(self, rng):
        q = np.zeros((1, 4), np.float32)
        k = rng.standard_normal((3, 4)).astype(np.float32)
        v = rng.standard_normal((3, 4)).astype(np.float32)
        out = K.masked_softmax_attention(q, k, v, [[True, False, True]])
        np.testing.assert_allclose(out[0], (v[0] + v[2]) / 2, atol=1e-7)

    def test_random_mask_matches_per_row_oracle(self, rng):
        q, k, v = (rng.standard_normal((8, 8)).astype(np.float32) for _ in range(3))
        mask = rng.random((8, 8)) < 0.5
        mask[np.arange(8), rng.integers(0, 8, 8)] = True
        out = K.masked_softmax_attention(q, k, v, mask)
        np.testing.assert_allclose(out, softmax_oracle(q, k, v, mask), atol=1e-6, rtol=0)

    def test_fully_masked_row(self):
        mask = np.ones((2, 2), bool)
        mask[1] = False
        with pytest.raises(InvalidMaskError):
            K.masked_softmax_attention(np.zeros((2, 2)), np.zeros((2, 2)), np.zeros((2, 2)), mask)


def test_layer_norm_against_float64(rng):
    x = rng.standard_normal((5, 16)).astype(np.float32)
    y = K.layer_norm(x, np.ones(16, np.float32), np.zeros(16, np.float32))
    x64 = x.astype(np.float64)
    ref = (x64 - x64.mean(-1, keepdims=True)) / np.sqrt(x64.var(-1, keepdims=True) + 1e-5)
    np.testing.assert_allclose(y, ref, atol=1e-5)


def test_activations_finite_and_pure(rng):
    x = (rng.standard_normal(1000) * 50).astype(np.float32)
    for fn in (K.tanh, K.sigmoid, K.relu, K.leaky_relu):
        y = fn(x)
        assert np.all(np.isfinite(y))
        assert y.tobytes() == fn(x.copy()).tobytes()
