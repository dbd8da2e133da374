import math

import numpy as np
import pytest

from fblearn.dsp import FrameSpec, PowerSpectrogram, Waveform, power_spectrogram
from fblearn.errors import FrozenLayerError, InvalidArgument
from fblearn.fblayer import (
    FBLayerState,
    fb_backward,
    fb_forward,
    log_filterbank_features,
    sgd_weight_update,
)
from fblearn.melbank import triangular_filterbank

from oracles import central_difference, loop_log_mel


def random_instance(rng):
    n_filt = int(rng.integers(1, 9))
    n_bins = int(rng.integers(2, 33))
    T = int(rng.integers(1, 6))
    W = rng.uniform(0, 1, size=(n_filt, n_bins))
    f = rng.uniform(0.1, 1, size=(n_bins, T))
    G = rng.standard_normal((n_filt, T))
    return W, f, G


def scalar_loss(W, f, G, eps=1e-10):
    return float(np.sum(G * np.log(np.maximum(W @ f, 0) + eps)))


class TestForward:
    def test_one_hot_row_gives_one(self):
        eps = 1e-10
        W = np.zeros((1, 5))
        W[0, 3] = 1.0
        f = np.zeros((5, 2))
        f[3] = math.e - eps
        feats, _ = fb_forward(FBLayerState(W), f)
        np.testing.assert_allclose(feats, 1.0, rtol=0, atol=1e-15)

    def test_non_positive_energy_clamped(self):
        W = -np.ones((2, 3))
        feats, cache = fb_forward(FBLayerState(W), np.ones((3, 4)))
        np.testing.assert_allclose(feats, math.log(1e-10))
        assert feats[0, 0] == pytest.approx(-23.025850929940457)
        assert np.all(cache.m < 0)

    def test_accepts_power_spectrogram(self):
        spec = PowerSpectrogram(np.ones((3, 5)), FrameSpec(8), 100)
        feats, cache = fb_forward(FBLayerState(np.eye(5)[:2]), spec)
        assert feats.shape == (2, 3)
        assert cache.f.shape == (5, 3)

    def test_batched_matches_single(self):
        rng = np.random.default_rng(0)
        W = rng.uniform(size=(4, 9))
        f = rng.uniform(size=(3, 9, 5))
        batched, _ = fb_forward(FBLayerState(W), f)
        for n in range(3):
            np.testing.assert_array_equal(batched[n], fb_forward(FBLayerState(W), f[n])[0])

    def test_dimension_mismatch(self):
        with pytest.raises(InvalidArgument):
            fb_forward(FBLayerState(np.ones((2, 4))), np.ones((5, 3)))

    def test_equals_log_mel_oracle(self):
        rng = np.random.default_rng(11)
        sr, nfft, hop, n_filt = 8000, 128, 64, 12
        x = rng.standard_normal(600)
        fb = triangular_filterbank(n_filt, nfft, sr)
        spec = power_spectrogram(Waveform(x, sr), FrameSpec(nfft, hop))
        feats = log_filterbank_features(fb, spec)
        np.testing.assert_allclose(feats, loop_log_mel(x, sr, nfft, hop, n_filt), rtol=0, atol=1e-9)

    def test_deterministic(self):
        rng = np.random.default_rng(5)
        W, f, _ = random_instance(rng)
        a, _ = fb_forward(FBLayerState(W), f)
        b, _ = fb_forward(FBLayerState(W), f)
        assert a.tobytes() == b.tobytes()

    def test_epsilon_must_be_positive(self):
        with pytest.raises(InvalidArgument):
            FBLayerState(np.ones((1, 2)), epsilon=0.0)


class TestBackward:
    def test_zero_upstream(self):
        W, f, G = random_instance(np.random.default_rng(1))
        state = FBLayerState(W)
        _, cache = fb_forward(state, f)
        gW, gf = fb_backward(np.zeros_like(G), cache, state)
        assert not gW.any() and not gf.any()

    def test_closed_gate_zero_row(self):
        rng = np.random.default_rng(2)
        W = rng.uniform(0, 1, size=(3, 6))
        W[1] = -W[1]
        f = rng.uniform(0.1, 1, size=(6, 4))
        state = FBLayerState(W)
        _, cache = fb_forward(state, f)
        gW, gf = fb_backward(rng.standard_normal((3, 4)), cache, state)
        assert np.all(gW[1] == 0)
        assert np.any(gW[0] != 0)
        # upstream gradient on the closed row alone reaches neither output
        only_row1 = np.zeros((3, 4))
        only_row1[1] = 1.0
        gW1, gf1 = fb_backward(only_row1, cache, state)
        assert not gW1.any() and not gf1.any()

    @pytest.mark.parametrize("seed", range(10))
    def test_finite_differences(self, seed):
        rng = np.random.default_rng(seed)
        W, f, G = random_instance(rng)
        state = FBLayerState(W)
        _, cache = fb_forward(state, f)
        gW, gf = fb_backward(G, cache, state)
        num_W = central_difference(lambda w: scalar_loss(w, f, G), W)
        num_f = central_difference(lambda x: scalar_loss(W, x, G), f)
        np.testing.assert_allclose(gW, num_W, rtol=1e-5, atol=1e-8)
        np.testing.assert_allclose(gf, num_f, rtol=1e-5, atol=1e-8)

    def test_batched_gradient_sums_over_batch(self):
        rng = np.random.default_rng(3)
        W = rng.uniform(size=(3, 7))
        f = rng.uniform(0.1, 1, size=(4, 7, 5))
        G = rng.standard_normal((4, 3, 5))
        state = FBLayerState(W)
        _, cache = fb_forward(state, f)
        gW, gf = fb_backward(G, cache, state)
        total = sum(fb_backward(G[n], fb_forward(state, f[n])[1], state)[0] for n in range(4))
        np.testing.assert_allclose(gW, total, rtol=1e-12)
        assert gf.shape == f.shape

    def test_printed_rule_fails_gradient_check(self):
        # the unscaled rule (no 1/(relu(m)+eps) factor) is kept only for comparison runs
        rng = np.random.default_rng(4)
        W, f, G = random_instance(rng)
        state = FBLayerState(W, paper_exact_gradient=True)
        _, cache = fb_forward(state, f)
        gW, _ = fb_backward(G, cache, state)
        num_W = central_difference(lambda w: scalar_loss(w, f, G), W)
        assert not np.allclose(gW, num_W, rtol=1e-3)
        delta = G * (cache.m > 0)
        np.testing.assert_allclose(gW, delta @ f.T)

    def test_shape_mismatch(self):
        state = FBLayerState(np.ones((2, 3)))
        _, cache = fb_forward(state, np.ones((3, 4)))
        with pytest.raises(InvalidArgument):
            fb_backward(np.ones((2, 5)), cache, state)


class TestUpdate:
    def test_zero_rate(self):
        s = FBLayerState(np.ones((2, 2)))
        np.testing.assert_array_equal(sgd_weight_update(s, np.ones((2, 2)), 0.0).W, s.W)

    def test_arithmetic(self):
        s = sgd_weight_update(FBLayerState([[1.0]]), [[2.0]], 0.1)
        np.testing.assert_allclose(s.W, [[0.8]])

    def test_frozen(self):
        s = FBLayerState(np.ones((1, 1)), trainable=False)
        with pytest.raises(FrozenLayerError):
            sgd_weight_update(s, [[1.0]], 0.1)
        np.testing.assert_array_equal(s.W, [[1.0]])

    def test_shape_checked(self):
        with pytest.raises(InvalidArgument):
            sgd_weight_update(FBLayerState(np.ones((1, 2))), np.ones((2, 1)), 0.1)
