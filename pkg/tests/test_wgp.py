"""Weighted-kernel GP posterior, logistic-normal summaries and the Taylor UCE."""
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import log_softmax

from eventsimplex import numdiff as nd
from eventsimplex import wgp
from eventsimplex.encoder import PseudoPointSet


def posterior(w, loc, y, q, config=wgp.KernelConfig()):
    mu, var = wgp.gp_posterior(np.asarray(w, float), np.asarray(loc, float), np.asarray(y, float),
                               np.atleast_1d(np.asarray(q, float)), config)
    return mu.data, var.data


class TestKernel:
    def test_zero_weight_discards(self):
        assert wgp.weighted_kernel(0.1, 0.7, 5.0, 0.0) == 0.0

    def test_unit_on_diagonal(self):
        assert wgp.weighted_kernel(0.3, 1.0, 0.3, 1.0) == 1.0

    def test_unit_distance(self):
        # [DERIVED] exp(-1)
        assert wgp.weighted_kernel(0.0, 1.0, 1.0, 1.0) == pytest.approx(0.36787944117144233, abs=1e-15)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            wgp.KernelConfig(gamma=0.0)

    def test_gram_psd_over_random_configurations(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            M = rng.integers(1, 8)
            K = wgp.weighted_gram(rng.uniform(0, 3, M), rng.uniform(0, 1, M), wgp.KernelConfig()).data
            assert np.linalg.eigvalsh(K).min() >= -1e-9


class TestPosterior:
    def test_interpolates_observed_point(self):
        mu, var = posterior([1.0], [0.5], [2.0], 0.5)
        assert mu[0] == pytest.approx(2.0, abs=1e-4) and var[0] == pytest.approx(0.0, abs=1e-4)

    def test_prior_far_away(self):
        mu, var = posterior([0.9, 0.4], [0.2, 1.0], [3.0, -2.0], 10.0)
        assert abs(mu[0]) < 1e-12 and var[0] == pytest.approx(1.0, abs=1e-12)

    def test_zero_weight_point_is_discarded(self):
        # [DERIVED] the zero-weight row/column decouples; compare with the reduced fit
        mu2, var2 = posterior([1.0, 0.0], [0.3, 0.8], [1.5, -4.0], [0.1, 0.5, 0.9])
        mu1, var1 = posterior([1.0], [0.3], [1.5], [0.1, 0.5, 0.9])
        np.testing.assert_allclose(mu2, mu1, atol=1e-6)
        np.testing.assert_allclose(var2, var1, atol=1e-6)

    def test_discard_is_continuous(self):
        ref, _ = posterior([1.0], [0.3], [1.5], [0.6])
        gaps = [abs(posterior([1.0, w], [0.3, 0.7], [1.5, -2.0], [0.6])[0][0] - ref[0])
                for w in (1.0, 0.5, 0.1, 0.0)]
        assert gaps[-1] < 1e-6 and gaps[0] > gaps[-1]

    def test_variance_bounds(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            M = rng.integers(1, 6)
            _, var = posterior(rng.uniform(0, 1, M), rng.uniform(0, 2, M), rng.normal(size=M),
                               rng.uniform(0, 3, 5))
            assert np.all(var >= 0) and np.all(var <= 1.0 + 1e-6)

    def test_duplicate_locations_handled_by_jitter(self):
        mu, var = posterior([1.0, 1.0], [0.5, 0.5], [1.0, 1.0], 0.5)
        assert np.isfinite(mu[0]) and np.isfinite(var[0])

    def test_gradient_through_points_and_query(self):
        rng = np.random.default_rng(2)

        def f(w, loc, y, q):
            mu, var = wgp.gp_posterior(nd.sigmoid(w), loc, y, q)
            return (mu * np.array([1.0, -0.5])).sum() + var.sum()
        assert nd.grad_check(f, [rng.normal(size=3), rng.uniform(0, 1, 3), rng.normal(size=3),
                                 np.array([0.2, 0.9])]) < 1e-4

    def test_ln_params_shapes(self):
        rng = np.random.default_rng(3)
        pts = PseudoPointSet("wgp", nd.Tensor(rng.uniform(0, 1, (4, 3, 2))), nd.Tensor(rng.uniform(0, 1, (4, 3, 2))),
                             nd.Tensor(rng.normal(size=(4, 3, 2))))
        mu, var = wgp.ln_params(pts, rng.uniform(0, 1, (4, 5)))
        assert mu.shape == var.shape == (4, 5, 3)


class TestSimplexSummaries:
    def test_zero_variance_is_softmax(self):
        mu = np.array([[1.0, -0.5, 0.2]])
        np.testing.assert_allclose(wgp.ln_mean_probs(mu, np.zeros_like(mu), 10),
                                   np.exp(log_softmax(mu, axis=-1)), atol=1e-15)

    def test_symmetric_two_class(self):
        p = wgp.ln_mean_probs(np.zeros(2), np.full(2, 0.7), 20000, seed=1)
        np.testing.assert_allclose(p, [0.5, 0.5], atol=0.01)

    def test_sums_to_one_and_deterministic(self):
        rng = np.random.default_rng(4)
        mu, var = rng.normal(size=(7, 4)), rng.uniform(0, 2, (7, 4))
        a, b = wgp.ln_mean_probs(mu, var, 500, seed=3), wgp.ln_mean_probs(mu, var, 500, seed=3)
        np.testing.assert_allclose(a.sum(-1), 1.0, atol=1e-12)
        assert np.array_equal(a, b)

    def test_matches_independent_mc(self):
        # [DERIVED] independent Monte Carlo with another seed and 10^6 samples
        mu, var = np.array([1.0, 0.0]), np.array([0.5, 0.5])
        z = np.random.default_rng(123).normal(mu, np.sqrt(var), (1_000_000, 2))
        p = np.exp(log_softmax(z, axis=-1))[:, 0]
        est = wgp.ln_mean_probs(mu, var, 1_000_000, seed=7)[0]
        assert abs(est - p.mean()) < 3 * math.sqrt(2) * p.std() / 1000

    def test_confidence_two_class(self):
        assert wgp.ln_confidence([0.4, 0.4], [0.3, 0.9], 0) == pytest.approx(0.5)
        # [DERIVED] Phi(3) = 0.9986501019683699
        assert wgp.ln_confidence([3.0, 0.0], [0.5, 0.5], 0) == pytest.approx(0.9986501019683699, abs=1e-12)

    def test_confidence_exchangeable_three_class(self):
        q = wgp.ln_confidence(np.zeros(3), np.ones(3), None, samples=30000, seed=2)
        np.testing.assert_allclose(q, 1 / 3, atol=0.01)


def mc_uce(mu, var, c, n=1_000_000, seed=0):
    z = np.random.default_rng(seed).normal(mu, np.sqrt(var), (n, len(mu)))
    vals = -log_softmax(z, axis=-1)[:, c]
    return vals.mean(), vals.std() / math.sqrt(n)


class TestTaylorUCE:
    def test_reduces_to_cross_entropy(self):
        assert wgp.uce_taylor([0.0, 0.0], [0.0, 0.0], 0).item() == pytest.approx(math.log(2), abs=1e-15)

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.floats(-4, 4), min_size=2, max_size=6), st.integers(0, 5))
    def test_zero_variance_is_cross_entropy(self, mu, c):
        mu = np.array(mu)
        c = c % len(mu)
        assert wgp.uce_taylor(mu, np.zeros_like(mu), c).item() == pytest.approx(-log_softmax(mu)[c], abs=1e-10)

    def test_permuting_other_classes(self):
        a = wgp.uce_taylor([0.3, 1.0, -2.0], [0.2, 0.5, 0.9], 0).item()
        b = wgp.uce_taylor([0.3, -2.0, 1.0], [0.2, 0.9, 0.5], 0).item()
        assert a == pytest.approx(b, abs=1e-14)

    def test_mc_oracle_example(self):
        # [DERIVED] MC with 10^6 samples gives about 0.480 against Taylor 0.4683
        taylor = wgp.uce_taylor([1.0, 0.0, -1.0], [0.3, 0.3, 0.3], 0).item()
        mc, _ = mc_uce(np.array([1.0, 0.0, -1.0]), np.full(3, 0.3), 0)
        assert abs(taylor - mc) < 0.02

    def test_stable_for_large_logits(self):
        v = wgp.uce_taylor([800.0, 0.0], [0.1, 0.1], 1).item()
        assert np.isfinite(v)

    def test_gradient(self):
        rng = np.random.default_rng(5)
        assert nd.grad_check(lambda m, v: wgp.uce_taylor(m, v, np.array([0, 2])).sum(),
                             [rng.normal(size=(2, 3)), rng.uniform(0.1, 1.0, (2, 3))]) < 1e-4
