import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import transform_distance_loop, truncated_l2_loop
from rankalign.exceptions import ArgumentError, PointAtInfinityError, UndefinedMetricError
from rankalign.geometry import WarpedImage, compose, normalization_for, translation_params
from rankalign.metrics import MetricConfig, pairwise_truncated_l2, success_fraction, transform_distance, truncated_l2


class TestTruncatedL2:
    def test_identical(self):
        a = np.random.default_rng(0).uniform(0, 255, (5, 5))
        assert truncated_l2(a, a, np.ones((5, 5), bool)) == 0.0

    def test_saturated(self):
        a = np.zeros((4, 4))
        b = a + np.random.default_rng(1).uniform(25, 200, (4, 4))
        assert truncated_l2(a, b, np.ones((4, 4), bool)) == 25.0

    def test_loop_oracle(self):
        rng = np.random.default_rng(2)
        a, b = rng.uniform(0, 255, (16, 16)), rng.uniform(0, 255, (16, 16))
        mask = rng.random((16, 16)) < 0.6
        assert abs(truncated_l2(a, b, mask) - truncated_l2_loop(a, b, mask, 25.0)) < 1e-12

    def test_colour_pixels(self):
        rng = np.random.default_rng(3)
        a, b = rng.uniform(0, 30, (6, 6, 3)), rng.uniform(0, 30, (6, 6, 3))
        mask = np.ones((6, 6), bool)
        assert abs(truncated_l2(a, b, mask) - truncated_l2_loop(a, b, mask, 25.0)) < 1e-12

    def test_empty_overlap(self):
        with pytest.raises(UndefinedMetricError):
            truncated_l2(np.zeros((2, 2)), np.zeros((2, 2)), np.zeros((2, 2), bool))

    @given(st.integers(0, 10_000), st.floats(1, 100), st.floats(1, 100))
    def test_symmetric_bounded_monotone(self, seed, t1, t2):
        rng = np.random.default_rng(seed)
        a, b = rng.uniform(0, 255, (6, 6)), rng.uniform(0, 255, (6, 6))
        mask = rng.random((6, 6)) < 0.8
        mask[0, 0] = True
        lo, hi = sorted((t1, t2))
        c_lo, c_hi = MetricConfig(truncation_t=lo), MetricConfig(truncation_t=hi)
        v = truncated_l2(a, b, mask, c_lo)
        assert v == truncated_l2(b, a, mask, c_lo)
        assert 0 <= v <= lo + 1e-12
        assert v <= truncated_l2(a, b, mask, c_hi) + 1e-12

    def test_pairwise_weighting(self):
        m1 = np.zeros((4, 4), bool)
        m1[:, :3] = True
        m2 = np.ones((4, 4), bool)
        ws = [WarpedImage(np.zeros((4, 4)), m1), WarpedImage(np.full((4, 4), 3.0), m2),
              WarpedImage(np.full((4, 4), 4.0), m2)]
        per, agg = pairwise_truncated_l2(ws)
        assert per == {(0, 1): 3.0, (0, 2): 4.0, (1, 2): 1.0}
        assert agg == pytest.approx(np.sqrt((12 * 9 + 12 * 16 + 16 * 1) / 40))

    def test_config_validation(self):
        with pytest.raises(ArgumentError):
            MetricConfig(truncation_t=0)


class TestTransformDistance:
    def test_same(self):
        t = np.random.default_rng(4).normal(0, 0.01, 8)
        assert transform_distance(t, t, 7, 9) == 0.0

    @pytest.mark.parametrize("h,w", [(1, 1), (5, 3), (17, 40)])
    def test_unit_translation(self, h, w):
        t = np.random.default_rng(5).normal(0, 0.01, 8) * [1, 1, 1, 1, 1, 1, 0, 0]
        t2 = compose(translation_params(1.0, 0.0), t)
        assert transform_distance(t, t2, h, w) == pytest.approx(1.0, abs=1e-12)

    def test_loop_oracle(self):
        rng = np.random.default_rng(6)
        a, b = rng.normal(0, 0.05, 8) * [1, 1, 5, 1, 1, 5, 0.01, 0.01], rng.normal(0, 0.05, 8) * [1, 1, 5, 1, 1, 5, 0.01, 0.01]
        assert transform_distance(a, b, 8, 8) == pytest.approx(transform_distance_loop(a, b, 8, 8), rel=1e-12)

    def test_symmetric(self):
        rng = np.random.default_rng(7)
        a, b = rng.normal(0, 0.01, 8), rng.normal(0, 0.01, 8)
        assert transform_distance(a, b, 6, 6) == transform_distance(b, a, 6, 6)

    def test_normalized_frame(self):
        f = normalization_for(20, 10)
        t = translation_params(2.0, 0.0, f)
        assert transform_distance(np.zeros(8), t, 10, 20, f) == pytest.approx(4.0)

    def test_point_at_infinity(self):
        t = np.zeros(8)
        t[6] = -0.5
        with pytest.raises(PointAtInfinityError):
            transform_distance(np.zeros(8), t, 4, 4)


class TestSuccessFraction:
    def test_all_exact(self):
        trials = [(np.zeros(8), np.zeros(8), 10, 10)] * 4
        assert success_fraction(trials) == 1.0

    def test_all_offset(self):
        trials = [(np.zeros(8), translation_params(2.0, 0.0), 10, 10)] * 3
        assert success_fraction(trials) == 0.0

    def test_mixed(self):
        offsets = [0.0, 0.5, 0.99, 1.0, 1.5]
        trials = [(np.zeros(8), translation_params(o, 0.0), 8, 8) for o in offsets]
        # d = o^2; success iff o^2 < 1
        assert success_fraction(trials) == pytest.approx(3 / 5)

    def test_empty(self):
        with pytest.raises(ArgumentError):
            success_fraction([])
