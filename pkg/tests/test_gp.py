"""Incremental GP posterior against dense re-derivations and hand values."""

from __future__ import annotations

import numpy as np
import pytest

from gpbandits.checks import dense_posterior, dense_posterior_cov
from gpbandits.gp import IllConditionedPrior, MaterializedPrior, PosteriorState
from gpbandits.kernels import KernelSpec, gram_matrix


def scalar_prior(var: float = 1.0) -> MaterializedPrior:
    return MaterializedPrior.from_moments("s", np.zeros(1), np.array([[var]]))


def rbf_prior(n: int, lengthscale: float = 1.0) -> MaterializedPrior:
    arms = np.linspace(0.0, 20.0, n)[:, None]
    cov = gram_matrix(KernelSpec("rbf", lengthscale=lengthscale), arms)
    return MaterializedPrior.from_moments("rbf", np.zeros(n), cov)


class TestConditioning:
    def test_empty_state_returns_prior(self):
        prior = rbf_prior(12)
        state = PosteriorState(prior, 0.0625)
        mean, var = state.posterior_mean_var()
        np.testing.assert_array_equal(mean, prior.mean)
        np.testing.assert_array_equal(var, np.diag(prior.cov))

    def test_scalar_conditioning_hand_value(self):
        # prior N(0, 1), noise 0.25^2, observe y=1 at the only arm:
        # posterior mean 1/1.0625, variance 1 - 1/1.0625
        state = PosteriorState(scalar_prior(), 0.25**2)
        state.condition(0, 1.0)
        mean, var = state.posterior_mean_var()
        assert mean[0] == pytest.approx(0.9411764705882353, abs=1e-12)
        assert var[0] == pytest.approx(0.058823529411764705, abs=1e-12)

    def test_repeat_observation_contracts_toward_reward(self):
        # 2x2 dense oracle: repeated identical rewards must pull the mean
        # strictly closer to y and shrink the variance strictly.
        arms = np.array([[0.0], [1.0]])
        cov = gram_matrix(KernelSpec("rbf"), arms)
        prior = MaterializedPrior.from_moments("p", np.zeros(2), cov)
        state = PosteriorState(prior, 0.25**2)
        y = 1.0
        state.condition(0, y)
        gap_one = abs(y - state.mean[0])
        var_one = state.var[0]
        state.condition(0, y)
        gap_two = abs(y - state.mean[0])
        var_two = state.var[0]
        assert gap_two < gap_one
        assert var_two < var_one
        ref_mean, ref_var = dense_posterior(prior, 0.25**2, [0, 0], [y, y])
        np.testing.assert_allclose(state.mean, ref_mean, atol=1e-12)
        np.testing.assert_allclose(state.var, ref_var, atol=1e-12)

    def test_matches_dense_formula_on_random_instances(self):
        rng = np.random.default_rng(7)
        for _ in range(25):
            n = int(rng.integers(5, 21))
            prior = rbf_prior(n, lengthscale=float(rng.uniform(0.5, 4.0)))
            state = PosteriorState(prior, 0.0625)
            idx = rng.integers(0, n, size=int(rng.integers(1, 12)))
            ys = rng.normal(size=idx.size)
            for i, y in zip(idx, ys):
                state.condition(int(i), float(y))
            ref_mean, ref_var = dense_posterior(prior, 0.0625, idx, ys)
            np.testing.assert_allclose(state.mean, ref_mean, atol=1e-8)
            np.testing.assert_allclose(state.var, ref_var, atol=1e-8)

    def test_variance_after_fifty_repeats(self):
        noise_var = 0.25**2
        state = PosteriorState(scalar_prior(), noise_var)
        for _ in range(50):
            state.condition(0, 0.3)
        assert state.var[0] <= noise_var / 50 + 1e-6

    def test_monotone_variance(self):
        rng = np.random.default_rng(3)
        prior = rbf_prior(15)
        state = PosteriorState(prior, 0.0625)
        for _ in range(40):
            before = state.var.copy()
            state.condition(int(rng.integers(15)), float(rng.normal()))
            assert np.all(state.var <= before + 1e-10)

    def test_exchangeability(self):
        rng = np.random.default_rng(11)
        prior = rbf_prior(10)
        idx = rng.integers(0, 10, size=8)
        ys = rng.normal(size=8)
        a = PosteriorState(prior, 0.0625)
        b = PosteriorState(prior, 0.0625)
        for i, y in zip(idx, ys):
            a.condition(int(i), float(y))
        order = rng.permutation(8)
        for k in order:
            b.condition(int(idx[k]), float(ys[k]))
        np.testing.assert_allclose(a.mean, b.mean, atol=1e-8)
        np.testing.assert_allclose(a.var, b.var, atol=1e-8)

    def test_refactorize_is_consistent(self):
        rng = np.random.default_rng(5)
        prior = rbf_prior(12)
        state = PosteriorState(prior, 0.0625)
        for _ in range(20):
            state.condition(int(rng.integers(12)), float(rng.normal()))
        mean, var = state.posterior_mean_var()
        state.refactorize()
        np.testing.assert_allclose(state.mean, mean, atol=1e-10)
        np.testing.assert_allclose(state.var, var, atol=1e-10)

    def test_factor_reconstructs_observed_block(self):
        rng = np.random.default_rng(9)
        prior = rbf_prior(20)
        state = PosteriorState(prior, 0.0625)
        idx = rng.integers(0, 20, size=12)
        for i in idx:
            state.condition(int(i), float(rng.normal()))
        chol = state.chol_obs
        rebuilt = chol @ chol.T
        expected = prior.cov[np.ix_(idx, idx)] + 0.0625 * np.eye(12)
        rel = np.linalg.norm(rebuilt - expected) / np.linalg.norm(expected)
        assert rel < 1e-6

    def test_bad_arm_index_rejected(self):
        state = PosteriorState(rbf_prior(5), 0.0625)
        with pytest.raises(ValueError):
            state.condition(5, 0.0)
        with pytest.raises(ValueError):
            PosteriorState(rbf_prior(5), 0.0)

    def test_buffer_growth_preserves_state(self):
        rng = np.random.default_rng(13)
        prior = rbf_prior(8)
        state = PosteriorState(prior, 0.0625, capacity=8)
        idx = rng.integers(0, 8, size=30)
        ys = rng.normal(size=30)
        for i, y in zip(idx, ys):
            state.condition(int(i), float(y))
        ref_mean, ref_var = dense_posterior(prior, 0.0625, idx, ys)
        np.testing.assert_allclose(state.mean, ref_mean, atol=1e-8)
        np.testing.assert_allclose(state.var, ref_var, atol=1e-8)


class TestSampling:
    def test_no_data_sample_matches_prior_moments(self):
        rng = np.random.default_rng(17)
        prior = rbf_prior(8, lengthscale=2.0)
        state = PosteriorState(prior, 0.0625)
        draws = np.vstack([state.sample_posterior(rng) for _ in range(20000)])
        sd = np.sqrt(np.diag(prior.cov))
        se = 3.0 * sd / np.sqrt(20000)
        assert np.all(np.abs(draws.mean(axis=0) - prior.mean) <= se)
        emp_cov = np.cov(draws, rowvar=False)
        cov_se = 3.0 * np.sqrt(
            np.outer(np.diag(prior.cov), np.diag(prior.cov)) + prior.cov**2
        ) / np.sqrt(20000)
        assert np.all(np.abs(emp_cov - prior.cov) <= cov_se + 1e-6)

    def test_conditioned_sample_matches_dense_moments(self):
        rng = np.random.default_rng(20)
        prior = rbf_prior(7)
        state = PosteriorState(prior, 0.0625)
        idx = [1, 4, 4, 6]
        ys = [0.5, -0.2, -0.1, 1.2]
        for i, y in zip(idx, ys):
            state.condition(i, y)
        draws = np.vstack([state.sample_posterior(rng) for _ in range(20000)])
        ref_mean, ref_cov = dense_posterior_cov(prior, 0.0625, idx, ys)
        sd = np.sqrt(np.clip(np.diag(ref_cov), 0, None))
        assert np.all(np.abs(draws.mean(axis=0) - ref_mean) <= 3 * sd / np.sqrt(20000) + 1e-9)
        emp_cov = np.cov(draws, rowvar=False)
        cov_se = np.sqrt(np.outer(sd**2, sd**2) + ref_cov**2) / np.sqrt(20000)
        assert np.all(np.abs(emp_cov - ref_cov) <= 3 * cov_se + 1e-9)

    def test_noiseless_limit_interpolates(self):
        rng = np.random.default_rng(23)
        prior = rbf_prior(6)
        state = PosteriorState(prior, 1e-10)
        state.condition(2, 0.7)
        draws = np.array([state.sample_posterior(rng)[2] for _ in range(500)])
        assert abs(draws.mean() - 0.7) < 1e-4
        assert draws.std() <= 1e-4


class TestPredictiveLoglik:
    def test_hand_value_no_history(self):
        state = PosteriorState(scalar_prior(), 0.25**2)
        expected = -0.5 * np.log(2.0 * np.pi * 1.0625)
        assert state.predictive_loglik(0, 0.0) == pytest.approx(expected, abs=1e-12)
        assert state.predictive_loglik(0, 0.0) == pytest.approx(-0.9492508, abs=1e-6)

    def test_maximized_at_posterior_mean(self):
        rng = np.random.default_rng(29)
        prior = rbf_prior(9)
        state = PosteriorState(prior, 0.0625)
        for _ in range(5):
            state.condition(int(rng.integers(9)), float(rng.normal()))
        arm = 4
        peak = state.predictive_loglik(arm, float(state.mean[arm]))
        for offset in (-1.0, -0.1, 0.1, 1.0):
            assert state.predictive_loglik(arm, float(state.mean[arm]) + offset) < peak

    def test_identical_posteriors_give_identical_values(self):
        prior = rbf_prior(5)
        a = PosteriorState(prior, 0.0625)
        b = PosteriorState(prior, 0.0625)
        for st in (a, b):
            st.condition(1, 0.4)
            st.condition(3, -0.2)
        assert a.predictive_loglik(2, 0.9) == b.predictive_loglik(2, 0.9)


class TestMaterializedPrior:
    def test_chol_reconstructs_cov(self):
        prior = rbf_prior(30)
        rebuilt = prior.chol @ prior.chol.T
        target = prior.cov + prior.jitter * np.eye(30)
        rel = np.linalg.norm(rebuilt - target, "fro") / np.linalg.norm(target, "fro")
        assert rel < 1e-6

    def test_non_psd_matrix_rejected(self):
        bad = np.array([[1.0, 2.0], [2.0, 1.0]])  # eigenvalues 3, -1
        with pytest.raises(IllConditionedPrior):
            MaterializedPrior.from_moments("bad", np.zeros(2), bad)

    def test_max_variance(self):
        cov = np.diag([0.3, 2.0, 1.0])
        prior = MaterializedPrior.from_moments("d", np.zeros(3), cov)
        assert prior.max_variance == 2.0
