import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import FIXTURES
from streaming_ac import bottleneck as B
from streaming_ac.errors import ConfigurationError, StateError

TOY = B.WaveNetConfig()


def make(cfg, seed=1234, t=64):
    r = np.random.default_rng(seed)
    w = B.init_weights(cfg, r)
    x = r.standard_normal((t, cfg.in_channels)).astype(np.float32)
    return w, x


def stream(x, cfg, w, sizes):
    state = B.StreamConvState.fresh(cfg, w)
    outs, i = [], 0
    for n in sizes:
        out, state = B.wavenet_step(x[i : i + n], state, cfg, w)
        outs.append(out)
        i += n
    assert i == x.shape[0]
    outs.append(B.wavenet_flush(state, cfg, w))
    return np.concatenate(outs), state


def smear_config():
    """One non-gated K=3 layer with unit weights; output is tanh of a 3-tap sum."""
    cfg = B.WaveNetConfig(in_channels=1, channels=1, out_channels=1, dilations=(1,),
                          gated=False, residual=False, skip=False)
    w = {k: np.ones_like(v) for k, v in B.init_weights(cfg, np.random.default_rng(0)).items()}
    for k in w:
        if k.endswith(".b"):
            w[k] = np.zeros_like(w[k])
    return cfg, w


def random_splits(rng, total):
    sizes = []
    while total:
        n = int(rng.integers(1, min(total, 9) + 1))
        sizes.append(n)
        total -= n
    return sizes


class TestConfig:
    def test_reach(self):
        assert TOY.future_reach == 15
        assert B.WaveNetConfig(kernel_size=5, dilations=(1, 3)).future_reach == 8

    def test_even_kernel(self):
        with pytest.raises(ConfigurationError):
            B.WaveNetConfig(kernel_size=4)


class TestOffline:
    def test_pointwise_layer_ignores_neighbours(self, rng):
        cfg = B.WaveNetConfig(kernel_size=1, dilations=(1,))
        w, x = make(cfg, t=12)
        full = B.wavenet_offline(x, cfg, w)
        for t in range(12):
            np.testing.assert_array_equal(full[t : t + 1], B.wavenet_offline(x[t : t + 1], cfg, w))

    def test_impulse_smear(self):
        cfg, w = smear_config()
        x = np.zeros((7, 1), np.float32)
        x[3] = 1.0
        y = B.wavenet_offline(x, cfg, w)[:, 0]
        np.testing.assert_array_equal(y, [0, 0, np.tanh(np.float32(1)), np.tanh(np.float32(1)),
                                          np.tanh(np.float32(1)), 0, 0])

    def test_golden(self):
        rng = np.random.default_rng(1234)
        w = B.init_weights(TOY, rng)
        x = rng.standard_normal((32, 16)).astype(np.float32)
        np.testing.assert_allclose(B.wavenet_offline(x, TOY, w), np.load(FIXTURES / "wavenet_golden.npy"),
                                   atol=1e-6, rtol=0)

    def test_length_preserved(self):
        w, x = make(TOY, t=5)
        assert B.wavenet_offline(x, TOY, w).shape == (5, 16)


class TestStep:
    def test_zero_reach_emits_everything(self):
        cfg = B.WaveNetConfig(kernel_size=1, dilations=(1, 1))
        w, x = make(cfg, t=10)
        state = B.StreamConvState.fresh(cfg, w)
        for i in range(0, 10, 5):
            out, state = B.wavenet_step(x[i : i + 5], state, cfg, w)
            assert out.shape[0] == 5
        assert B.wavenet_flush(state, cfg, w).shape[0] == 0

    def test_emission_counting(self):
        cfg = B.WaveNetConfig(dilations=(1, 2, 4))
        assert cfg.future_reach == 7
        w, x = make(cfg, t=8)
        state = B.StreamConvState.fresh(cfg, w)
        out, state = B.wavenet_step(x[:4], state, cfg, w)
        assert out.shape[0] == 0
        out, state = B.wavenet_step(x[4:], state, cfg, w)
        assert out.shape[0] == 1
        assert state.emitted <= state.consumed - cfg.future_reach

    def test_four_frame_steps_match_offline(self):
        w, x = make(TOY)
        out, state = stream(x, TOY, w, [4] * 16)
        ref = B.wavenet_offline(x, TOY, w)
        assert np.abs(out - ref).max() <= 1e-5
        np.testing.assert_array_equal(out, ref)
        assert state.emitted == state.consumed == 64

    def test_zero_initialised_buffers(self):
        w, _ = make(TOY)
        state = B.StreamConvState.fresh(TOY, w)
        assert all(not np.any(b) for b in state.buffers())

    def test_empty_step(self):
        w, x = make(TOY)
        state = B.StreamConvState.fresh(TOY, w)
        out, state = B.wavenet_step(x[:0], state, TOY, w)
        assert out.shape == (0, 16)


class TestFlush:
    def test_zero_reach_flush_empty(self):
        cfg = B.WaveNetConfig(kernel_size=1)
        w, x = make(cfg, t=3)
        state = B.StreamConvState.fresh(cfg, w)
        B.wavenet_step(x, state, cfg, w)
        assert B.wavenet_flush(state, cfg, w).shape == (0, 16)

    def test_impulse_at_last_frame(self):
        cfg, w = smear_config()
        x = np.zeros((5, 1), np.float32)
        x[-1] = 1.0
        state = B.StreamConvState.fresh(cfg, w)
        out, state = B.wavenet_step(x, state, cfg, w)
        np.testing.assert_array_equal(out[:, 0], [0, 0, 0, np.tanh(np.float32(1))])
        tail = B.wavenet_flush(state, cfg, w)
        np.testing.assert_array_equal(tail[:, 0], [np.tanh(np.float32(1))])

    def test_flush_length_is_reach(self):
        w, x = make(TOY, t=40)
        state = B.StreamConvState.fresh(TOY, w)
        B.wavenet_step(x, state, TOY, w)
        assert B.wavenet_flush(state, TOY, w).shape[0] == TOY.future_reach

    def test_flush_twice(self):
        w, x = make(TOY)
        state = B.StreamConvState.fresh(TOY, w)
        B.wavenet_step(x, state, TOY, w)
        B.wavenet_flush(state, TOY, w)
        with pytest.raises(StateError):
            B.wavenet_flush(state, TOY, w)
        with pytest.raises(StateError):
            B.wavenet_step(x, state, TOY, w)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10**6), t=st.integers(1, 48))
def test_split_invariance(seed, t):
    w, x = make(TOY, seed, t)
    out, _ = stream(x, TOY, w, random_splits(np.random.default_rng(seed), t))
    np.testing.assert_array_equal(out, B.wavenet_offline(x, TOY, w))


def test_future_independence_is_tight(rng):
    w, x = make(TOY, t=48)
    ref = B.wavenet_offline(x, TOY, w)
    f = TOY.future_reach
    for t in (0, 10, 20):
        y = x.copy()
        y[t + f + 1 :] = rng.standard_normal(y[t + f + 1 :].shape)
        np.testing.assert_array_equal(B.wavenet_offline(y, TOY, w)[: t + 1], ref[: t + 1])
        z = x.copy()
        z[t + f] += 1.0
        assert not np.array_equal(B.wavenet_offline(z, TOY, w)[t], ref[t])
