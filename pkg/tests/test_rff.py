"""Feature map construction, the feature formula, and bandwidth fitting."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from curioplan import autodiff as ad
from curioplan import rff
from curioplan.errors import InsufficientDataError, InvalidInputError


class TestSampleFeatureMap:
    def test_deterministic_in_seed(self):
        a = rff.sample_feature_map(2, 20, [1.0, 1.0], seed=0)
        b = rff.sample_feature_map(2, 20, [1.0, 1.0], seed=0)
        np.testing.assert_array_equal(a.proj, b.proj)
        np.testing.assert_array_equal(a.phase, b.phase)

    def test_shapes(self):
        fmap = rff.sample_feature_map(2, 20, [1.0, 1.0], seed=0)
        assert fmap.proj.shape == (20, 2)
        assert fmap.phase.shape == (20,)
        assert fmap.m == 20 and fmap.n == 2

    def test_nonpositive_bandwidth_rejected(self):
        with pytest.raises(InvalidInputError):
            rff.sample_feature_map(2, 20, [0.0, 1.0], seed=0)

    def test_projection_roughly_standard_normal(self):
        fmap = rff.sample_feature_map(4, 50, np.ones(4), seed=3)
        flat = fmap.proj.ravel()
        assert abs(flat.mean()) < 4.0 / np.sqrt(flat.size)
        assert 0.5 < flat.var() < 1.5

    def test_phase_within_range(self):
        fmap = rff.sample_feature_map(3, 200, np.ones(3), seed=1)
        assert np.all(fmap.phase >= -np.pi) and np.all(fmap.phase < np.pi)


class TestFeaturize:
    def test_zero_projection_row_gives_sin_phase(self):
        fmap = rff.FeatureMap(proj=np.zeros((1, 2)), phase=np.array([np.pi / 2]),
                              bandwidth=np.ones(2), seed=0)
        np.testing.assert_allclose(rff.featurize(fmap, np.array([3.0, -1.0])), [1.0])

    def test_zero_input_gives_sin_phase(self):
        fmap = rff.sample_feature_map(3, 10, np.ones(3), seed=2)
        np.testing.assert_allclose(rff.featurize(fmap, np.zeros(3)), np.sin(fmap.phase))

    def test_bandwidth_scaling_formula(self):
        # proj row [1, 0], nu = [2, 1], phase 0, x = [pi, 5] -> sin(pi/2) = 1
        fmap = rff.FeatureMap(proj=np.array([[1.0, 0.0]]), phase=np.zeros(1),
                              bandwidth=np.array([2.0, 1.0]), seed=0)
        np.testing.assert_allclose(rff.featurize(fmap, np.array([np.pi, 5.0])), [1.0])

    def test_dimension_mismatch(self):
        fmap = rff.sample_feature_map(3, 4, np.ones(3), seed=0)
        with pytest.raises(InvalidInputError):
            rff.featurize(fmap, np.zeros(2))

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.floats(-50, 50), min_size=3, max_size=3))
    def test_bounded_by_one(self, coords):
        fmap = rff.sample_feature_map(3, 25, np.full(3, 0.7), seed=9)
        phi = rff.featurize(fmap, np.array(coords))
        assert np.max(np.abs(phi)) <= 1.0

    def test_jacobian_matches_finite_differences(self):
        rng = np.random.default_rng(11)
        fmap = rff.sample_feature_map(4, 12, rng.uniform(0.5, 2.0, 4), seed=4)
        for _ in range(5):
            x = rng.normal(size=4)
            jac = rff.featurize_jacobian(fmap, x)
            h = 1e-6
            fd = np.empty_like(jac)
            for i in range(4):
                e = np.zeros(4)
                e[i] = h
                fd[:, i] = (rff.featurize(fmap, x + e) - rff.featurize(fmap, x - e)) / (2 * h)
            np.testing.assert_allclose(jac, fd, rtol=1e-6, atol=1e-9)

    def test_dual_jacobian_matches_analytic(self):
        rng = np.random.default_rng(12)
        fmap = rff.sample_feature_map(3, 7, rng.uniform(0.5, 2.0, 3), seed=5)
        x = rng.normal(size=3)
        dual = rff.featurize(fmap, ad.seed(x))
        np.testing.assert_allclose(dual.jac, rff.featurize_jacobian(fmap, x), rtol=1e-12)


class TestFitBandwidth:
    def test_single_pair(self):
        bw = rff.fit_bandwidth(np.array([[0.0, 0.0], [2.0, 4.0]]))
        np.testing.assert_allclose(bw, [2.0, 4.0])

    def test_degenerate_inputs_floored(self):
        bw = rff.fit_bandwidth(np.ones((3, 2)))
        np.testing.assert_allclose(bw, [1e-3, 1e-3])

    def test_three_points(self):
        # pairwise gaps 1, 2, 1 -> mean 4/3
        bw = rff.fit_bandwidth(np.array([[0.0], [1.0], [2.0]]))
        np.testing.assert_allclose(bw, [4.0 / 3.0])

    def test_matches_quadratic_oracle(self):
        rng = np.random.default_rng(8)
        pts = rng.normal(size=(40, 3))
        mean_abs = np.zeros(3)
        count = 0
        for i in range(40):
            for j in range(i + 1, 40):
                mean_abs += np.abs(pts[i] - pts[j])
                count += 1
        np.testing.assert_allclose(rff.fit_bandwidth(pts), mean_abs / count, rtol=1e-12)

    def test_too_few_inputs(self):
        with pytest.raises(InsufficientDataError):
            rff.fit_bandwidth(np.ones((1, 2)))


def test_evidence_search_prefers_reasonable_scale():
    # data generated by features at bandwidth 1; the search should not pick
    # the extreme ends of the grid
    rng = np.random.default_rng(21)
    x = rng.uniform(-2, 2, size=(120, 2))
    truth = rff.sample_feature_map(2, 12, np.ones(2), seed=33)
    w = rng.normal(size=12)
    y = rff.featurize(truth, x) @ w + 0.01 * rng.normal(size=120)
    base = rff.fit_bandwidth(x)
    bw = rff.fit_bandwidth_evidence(x, y, m=12, seed=33, beta=100.0)
    assert np.all(bw > base / 8.0 - 1e-9)
    assert np.all(bw < base * 8.0 + 1e-9)
