"""Posterior updates, prediction, entropy, and likelihoods of the regression."""

import math

import numpy as np
import pytest

from curioplan import blr
from curioplan.errors import InvalidInputError

LN_2PI_E = math.log(2 * math.pi * math.e)


def two_by_two_belief():
    """Posterior of a unit prior after one row phi=[1,0], y=2, beta=1."""
    prior = blr.prior_belief(m=2, d=1, alpha=1.0, beta=1.0)
    return blr.posterior_update(prior, blr.Dataset(np.array([[1.0, 0.0]]), np.array([2.0])))


class TestPosteriorUpdate:
    def test_dense_two_by_two(self):
        post = two_by_two_belief()
        # Sigma* = diag(0.5, 1), mu* = [1, 0]
        np.testing.assert_allclose(post.precision, np.diag([2.0, 1.0]))
        np.testing.assert_allclose(post.mean[:, 0], [1.0, 0.0], atol=1e-12)

    def test_empty_batch_is_identity(self):
        prior = blr.prior_belief(3, 2)
        post = blr.posterior_update(prior, blr.Dataset(np.empty((0, 3)), np.empty((0, 2))))
        assert post is prior

    def test_confirming_observation_keeps_mean(self):
        post = two_by_two_belief()
        again = blr.posterior_update(
            post, blr.Dataset(np.array([[1.0, 0.0]]), np.array([[1.0]])))
        np.testing.assert_allclose(again.mean, post.mean, atol=1e-12)
        np.testing.assert_allclose(again.precision, np.diag([3.0, 1.0]))

    def test_nonfinite_rejected(self):
        prior = blr.prior_belief(2, 1)
        with pytest.raises(InvalidInputError):
            blr.posterior_update(prior, blr.Dataset(np.array([[np.inf, 0.0]]), np.array([1.0])))

    def test_sequential_equals_batch(self):
        rng = np.random.default_rng(0)
        for trial in range(20):
            m = rng.integers(2, 20)
            n = rng.integers(1, 60)
            d = rng.integers(1, 4)
            beta = float(rng.uniform(0.2, 5.0))
            phi = rng.normal(size=(n, m))
            y = rng.normal(size=(n, d))
            prior = blr.prior_belief(m, d, alpha=float(rng.uniform(0.5, 2.0)), beta=beta)
            batch = blr.posterior_update(prior, blr.Dataset(phi, y))
            seq = prior
            for i in range(n):
                seq = blr.posterior_update(seq, blr.Dataset(phi[i:i + 1], y[i:i + 1]))
            np.testing.assert_allclose(seq.precision, batch.precision, rtol=1e-8)
            np.testing.assert_allclose(seq.mean, batch.mean, rtol=1e-8, atol=1e-10)

    def test_permutation_invariance(self):
        rng = np.random.default_rng(4)
        phi = rng.normal(size=(30, 6))
        y = rng.normal(size=(30, 2))
        prior = blr.prior_belief(6, 2, beta=2.0)
        a = blr.posterior_update(prior, blr.Dataset(phi, y))
        perm = rng.permutation(30)
        b = blr.posterior_update(prior, blr.Dataset(phi[perm], y[perm]))
        np.testing.assert_allclose(a.precision, b.precision, rtol=1e-8)
        np.testing.assert_allclose(a.mean, b.mean, rtol=1e-8, atol=1e-12)


class TestPredict:
    def test_worked_example(self):
        post = two_by_two_belief()
        mean, var = blr.predict(post, np.array([1.0, 0.0]))
        assert mean[0] == pytest.approx(1.0)
        assert var == pytest.approx(1.5)

    def test_zero_features_variance_floor(self):
        post = two_by_two_belief()
        _, var = blr.predict(post, np.zeros(2))
        assert var == pytest.approx(1.0 / post.beta)

    def test_identity_covariance_norm(self):
        belief = blr.prior_belief(2, 1, alpha=1.0, beta=1.0)
        _, var = blr.predict(belief, np.array([3.0, 4.0]))
        assert var == pytest.approx(26.0)

    def test_variance_never_below_noise_floor(self):
        rng = np.random.default_rng(7)
        belief = blr.posterior_update(
            blr.prior_belief(8, 1, beta=3.0),
            blr.Dataset(rng.normal(size=(50, 8)), rng.normal(size=(50, 1))))
        _, var = blr.predict(belief, rng.normal(size=(100, 8)))
        assert np.all(var >= 1.0 / belief.beta - 1e-15)


class TestEntropy:
    def test_unit_covariance(self):
        belief = blr.prior_belief(2, 1)
        assert blr.entropy(belief) == pytest.approx(LN_2PI_E, abs=1e-6)
        assert blr.entropy(belief) == pytest.approx(2.837877, abs=1e-6)

    def test_after_update(self):
        post = two_by_two_belief()
        assert blr.entropy(post) == pytest.approx(LN_2PI_E + 0.5 * math.log(0.5), abs=1e-6)
        assert blr.entropy(post) == pytest.approx(2.491304, abs=1e-6)

    def test_additive_over_outputs(self):
        assert blr.entropy(blr.prior_belief(2, 3)) == pytest.approx(3 * LN_2PI_E, abs=1e-6)

    def test_nonincreasing_under_updates(self):
        rng = np.random.default_rng(2)
        belief = blr.prior_belief(6, 2, beta=1.5)
        h = blr.entropy(belief)
        for _ in range(10):
            batch = blr.Dataset(rng.normal(size=(3, 6)), rng.normal(size=(3, 2)))
            belief = blr.posterior_update(belief, batch)
            h_new = blr.entropy(belief)
            assert h_new <= h + 1e-12
            h = h_new


class TestLogLikelihood:
    def test_zero_residual(self):
        post = two_by_two_belief()
        ll = blr.log_likelihood(post, np.array([1.0, 0.0]), np.array([1.0]))
        assert ll == pytest.approx(-0.5 * math.log(2 * math.pi * 1.5))
        assert ll == pytest.approx(-1.1217, abs=1e-4)

    def test_unit_variance_unit_residual(self):
        belief = blr.GaussianBelief(mean=np.zeros((1, 1)),
                                    precision=np.array([[1e12]]), beta=1.0)
        ll = blr.log_likelihood(belief, np.array([1.0]), np.array([1.0]))
        assert ll == pytest.approx(-0.5 * math.log(2 * math.pi) - 0.5, abs=1e-5)
        assert ll == pytest.approx(-1.41894, abs=1e-4)

    def test_multioutput_zero_residual(self):
        belief = blr.prior_belief(2, 3, beta=2.0)
        phi = np.zeros(2)
        ll = blr.log_likelihood(belief, phi, np.zeros(3))
        assert ll == pytest.approx(-1.5 * math.log(2 * math.pi * 0.5))

    def test_rows_match_scalar_calls(self):
        rng = np.random.default_rng(9)
        belief = blr.posterior_update(
            blr.prior_belief(4, 2, beta=2.0),
            blr.Dataset(rng.normal(size=(20, 4)), rng.normal(size=(20, 2))))
        phi = rng.normal(size=(5, 4))
        y = rng.normal(size=(5, 2))
        rows = blr.log_likelihood_rows(belief, phi, y)
        singles = [blr.log_likelihood(belief, phi[i], y[i]) for i in range(5)]
        np.testing.assert_allclose(rows, singles, rtol=1e-12)


def test_precision_asymmetry_rejected():
    with pytest.raises(InvalidInputError):
        blr.GaussianBelief(mean=np.zeros((2, 1)),
                           precision=np.array([[1.0, 0.1], [0.0, 1.0]]), beta=1.0)


def test_posterior_precision_dominates_prior():
    rng = np.random.default_rng(3)
    prior = blr.prior_belief(5, 1, alpha=0.7, beta=2.0)
    post = blr.posterior_update(
        prior, blr.Dataset(rng.normal(size=(12, 5)), rng.normal(size=(12, 1))))
    gap = post.precision - prior.precision
    assert np.min(np.linalg.eigvalsh(gap)) >= -1e-10


def test_save_load_roundtrip(tmp_path):
    post = two_by_two_belief()
    path = tmp_path / "belief.npz"
    blr.save_belief(path, post, fmap_seed=np.asarray(7))
    loaded, extra = blr.load_belief(path)
    np.testing.assert_array_equal(loaded.mean, post.mean)
    np.testing.assert_array_equal(loaded.precision, post.precision)
    assert loaded.beta == post.beta
    assert int(extra["fmap_seed"]) == 7
