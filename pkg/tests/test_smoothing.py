import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from fblearn.errors import InvalidArgument
from fblearn.melbank import FilterBank, Provenance, triangular_filterbank
from fblearn.smoothing import SavGolSpec, savgol_kernel, savgol_smooth, smooth_filterbank

from oracles import savgol_lstsq


def total_variation(rows):
    return float(np.abs(np.diff(rows, axis=-1)).sum())


class TestKernel:
    def test_five_point_quadratic(self):
        k = savgol_kernel(SavGolSpec(5, 2))
        np.testing.assert_allclose(k * 35, [-3, 12, 17, 12, -3], rtol=0, atol=1e-12)

    def test_three_point_quadratic_is_identity(self):
        np.testing.assert_allclose(savgol_kernel(SavGolSpec(3, 2)), [0, 1, 0], atol=1e-12)

    @pytest.mark.parametrize("window,order", [(5, 2), (7, 3), (9, 3), (11, 4), (15, 0)])
    def test_matches_lstsq_oracle(self, window, order):
        np.testing.assert_allclose(savgol_kernel(SavGolSpec(window, order)), savgol_lstsq(window, order),
                                   rtol=0, atol=1e-12)

    @pytest.mark.parametrize("window,order", [(5, 2), (9, 3), (21, 6)])
    def test_sums_to_one_and_annihilates_moments(self, window, order):
        k = savgol_kernel(SavGolSpec(window, order))
        half = window // 2
        x = np.arange(-half, half + 1)
        # offsets scaled to [-1, 1] so every moment column is O(1)
        A = np.vander(x / half, order + 1, increasing=True)
        expected = np.zeros(order + 1)
        expected[0] = 1.0
        np.testing.assert_allclose(k @ A, expected, atol=1e-12)

    def test_symmetric(self):
        k = savgol_kernel(SavGolSpec())
        np.testing.assert_allclose(k, k[::-1], atol=1e-14)

    @pytest.mark.parametrize("window,order", [(4, 2), (0, 0), (5, 5), (5, -1)])
    def test_invalid_spec(self, window, order):
        with pytest.raises(InvalidArgument):
            SavGolSpec(window, order)


class TestSmooth:
    def test_constant_rows_unchanged(self):
        rows = np.outer([0.0, 0.25, 3.0], np.ones(40))
        np.testing.assert_allclose(savgol_smooth(rows, SavGolSpec()), rows, rtol=0, atol=1e-12)

    def test_cubic_reproduced_in_interior(self):
        x = np.linspace(-1, 1, 60)
        y = 0.3 - 2 * x + 0.7 * x ** 2 + 1.5 * x ** 3
        out = savgol_smooth(y, SavGolSpec(9, 3))
        np.testing.assert_allclose(out[4:-4], y[4:-4], rtol=0, atol=1e-9)

    def test_mirror_edge(self):
        # reflected padding of a ramp is a tent, so the edge output is not the ramp value
        y = np.arange(10, dtype=float)
        out = savgol_smooth(y, SavGolSpec(3, 0))
        assert out[0] == pytest.approx((1 + 0 + 1) / 3)
        assert out[-1] == pytest.approx((8 + 9 + 8) / 3)

    def test_reduces_roughness_of_noisy_triangles(self):
        fb = triangular_filterbank(16, 1024, 8000)
        noisy = fb.weights + np.random.default_rng(0).normal(0, 0.05, fb.weights.shape)
        smoothed = savgol_smooth(noisy, SavGolSpec())
        assert total_variation(smoothed) < total_variation(noisy)
        for before, after in zip(noisy, smoothed):
            assert total_variation(after) < total_variation(before)

    @settings(max_examples=40, deadline=None)
    @given(
        arrays(np.float64, (2, 20), elements=st.floats(-10, 10)),
        arrays(np.float64, (2, 20), elements=st.floats(-10, 10)),
        st.floats(-3, 3),
    )
    def test_linear(self, a, b, c):
        spec = SavGolSpec(7, 2)
        lhs = savgol_smooth(a + c * b, spec)
        rhs = savgol_smooth(a, spec) + c * savgol_smooth(b, spec)
        np.testing.assert_allclose(lhs, rhs, rtol=1e-9, atol=1e-9)

    def test_one_dimensional_input(self):
        out = savgol_smooth(np.ones(12), SavGolSpec(5, 2))
        assert out.shape == (12,)

    def test_too_short(self):
        with pytest.raises(InvalidArgument):
            savgol_smooth(np.ones((2, 7)), SavGolSpec(9, 3))


class TestSmoothFilterBank:
    def test_shape_and_metadata(self):
        fb = triangular_filterbank(40, 8000, 8000)
        out = smooth_filterbank(fb)
        assert out.weights.shape == fb.weights.shape
        assert out.provenance is Provenance.SMOOTHED
        assert out.meta["savgol_window"] == 9 and out.meta["savgol_order"] == 3
        assert out.meta["fmin"] == 0.0
        assert (out.nfft, out.sample_rate_hz) == (fb.nfft, fb.sample_rate_hz)
        assert fb.provenance is Provenance.TRIANGULAR_INIT

    def test_negative_lobes_kept_by_default(self):
        w = np.zeros((1, 33))
        w[0, 16] = 1.0
        fb = FilterBank(w, 64, 1000, Provenance.TRAINED)
        assert smooth_filterbank(fb).weights.min() < 0
        assert smooth_filterbank(fb, clip_negative=True).weights.min() == 0.0

    def test_custom_spec(self):
        fb = triangular_filterbank(8, 256, 8000)
        out = smooth_filterbank(fb, SavGolSpec(3, 2))
        np.testing.assert_allclose(out.weights, fb.weights, atol=1e-12)
