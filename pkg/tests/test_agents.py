"""Policy behavior: selection rules, elimination bookkeeping, Bayes updates."""

from __future__ import annotations

import numpy as np
import pytest
from scipy.stats import chisquare

from gpbandits.agents import (
    ConfidenceSchedule,
    HPGPTS,
    MAPGPTS,
    PEGPTS,
    PEGPUCB,
    make_agent,
)
from gpbandits.gp import MaterializedPrior
from gpbandits.kernels import KernelSpec, gram_matrix
from gpbandits.priors import Hyperprior

NOISE_VAR = 0.25**2
DELTA = 0.05


def hyperprior_from_moments(means_covs):
    priors = tuple(
        MaterializedPrior.from_moments(f"p{i}", m, c)
        for i, (m, c) in enumerate(means_covs)
    )
    k = len(priors)
    return Hyperprior(priors=priors, weights=np.full(k, 1.0 / k))


def rbf_hyperprior(n=20, count=3):
    arms = np.linspace(0.0, 20.0, n)[:, None]
    cov = gram_matrix(KernelSpec("rbf", lengthscale=2.0), arms)
    return hyperprior_from_moments(
        [(np.full(n, 0.2 * i), cov) for i in range(count)]
    )


class TestConfidenceSchedule:
    def test_acting_width_value(self):
        sched = ConfidenceSchedule(0.05, 500, 6, NOISE_VAR)
        assert sched.beta(1) == pytest.approx(25.772189, abs=1e-5)

    def test_coverage_width_value(self):
        sched = ConfidenceSchedule(0.05, 500, 6, NOISE_VAR)
        assert sched.beta_concentration(1) == pytest.approx(24.385895, abs=1e-5)

    def test_strictly_increasing(self):
        sched = ConfidenceSchedule(0.05, 50, 4, NOISE_VAR)
        betas = [sched.beta(t) for t in range(1, 30)]
        xis = [sched.xi(t) for t in range(1, 30)]
        assert np.all(np.diff(betas) > 0)
        assert np.all(np.diff(xis) > 0)

    def test_delta_validated(self):
        with pytest.raises(ValueError):
            ConfidenceSchedule(0.0, 10, 2, NOISE_VAR)


class TestEliminationTrace:
    """Two arms, two nearly deterministic priors, rewards pinned at zero.

    The honest prior predicts 0, the wrong prior predicts 0.5 everywhere
    with negligible uncertainty, so the wrong prior keeps winning the
    optimistic selection and accumulates prediction error 0.5 per pull.
    The wrong prior's two arms are perfectly correlated, so either pull
    moves the same scalar posterior and an independent dense replay of the
    bookkeeping fixes the elimination step; both policies must match it.
    """

    EPS = 1e-12

    def build(self):
        n = 2
        cov = self.EPS * np.ones((n, n))
        return hyperprior_from_moments(
            [(np.zeros(n), cov), (np.full(n, 0.5), cov)]
        )

    def expected_elimination_step(self, max_steps=50):
        sched = ConfidenceSchedule(DELTA, 2, 2, NOISE_VAR)
        err_sum = 0.0
        width_sum = 0.0
        for m in range(1, max_steps + 1):
            t_obs = m - 1  # observations before this step
            if t_obs == 0:
                mu = 0.5
                var = self.EPS
            else:
                # exchangeable covariance: every pairwise entry is EPS
                k_obs = self.EPS * np.ones((t_obs, t_obs)) + NOISE_VAR * np.eye(t_obs)
                k_vec = np.full(t_obs, self.EPS)
                gain = np.linalg.solve(k_obs, k_vec)
                mu = 0.5 + gain @ (np.zeros(t_obs) - 0.5)
                var = self.EPS - gain @ k_vec
            err_sum += 0.0 - mu
            width_sum += np.sqrt(sched.beta(m)) * np.sqrt(max(var, 0.0))
            threshold = np.sqrt(sched.xi(m) * m) + width_sum
            if abs(err_sum) > threshold:
                return m
        raise AssertionError("no elimination within max_steps")

    @pytest.mark.parametrize("agent_cls", [PEGPTS, PEGPUCB])
    def test_wrong_prior_eliminated_at_hand_computed_step(self, agent_cls):
        hp = self.build()
        expected = self.expected_elimination_step()
        agent = agent_cls(hp, NOISE_VAR, np.random.default_rng(0), 60, DELTA)
        eliminated_at = None
        for t in range(1, 60):
            arm, prior = agent.select(t)
            if eliminated_at is None:
                assert prior == 1, "wrong prior should win optimistic selection"
                if agent_cls is PEGPUCB:
                    assert arm == 0, "tied arms break to the lowest index"
            agent.observe(t, arm, 0.0)
            if 1 in agent.eliminated:
                eliminated_at = t
                break
        assert eliminated_at == expected
        assert agent.active == [0]

    def test_eliminated_stats_frozen(self):
        hp = self.build()
        agent = PEGPUCB(hp, NOISE_VAR, np.random.default_rng(0), 60, DELTA)
        for t in range(1, 60):
            arm, prior = agent.select(t)
            agent.observe(t, arm, 0.0)
            if 1 in agent.eliminated:
                break
        frozen = (agent.err_sum[1], agent.width_sum[1], agent.sel_count[1])
        for t2 in range(t + 1, t + 6):
            arm, prior = agent.select(t2)
            assert prior == 0
            agent.observe(t2, arm, 0.0)
        assert (agent.err_sum[1], agent.width_sum[1], agent.sel_count[1]) == frozen

    def test_all_priors_eliminated_aborts(self):
        cov = self.EPS * np.eye(2)
        hp = hyperprior_from_moments(
            [(np.full(2, 5.0), cov), (np.full(2, 5.0), cov)]
        )
        agent = PEGPUCB(hp, NOISE_VAR, np.random.default_rng(0), 40, DELTA)
        for t in range(1, 40):
            arm, prior = agent.select(t)
            agent.observe(t, arm, 0.0)
            if agent.aborted:
                break
        assert agent.aborted
        assert agent.abort_reason == "all priors eliminated"
        assert agent.active == []


class TestPEGPTS:
    def test_degenerate_sampling_selects_mean_argmax(self):
        # variance -> 0 collapses posterior sampling onto the mean
        n = 6
        mean = np.array([0.1, 0.9, 0.3, 0.5, 0.0, -0.2])
        hp = hyperprior_from_moments([(mean, 1e-14 * np.eye(n))])
        agent = PEGPTS(hp, NOISE_VAR, np.random.default_rng(1), 10, DELTA)
        arm, prior = agent.select(1)
        assert (arm, prior) == (1, 0)

    def test_samples_drawn_for_all_active_priors(self):
        hp = rbf_hyperprior(count=3)
        agent = PEGPTS(hp, NOISE_VAR, np.random.default_rng(2), 10, DELTA)
        agent.select(1)
        assert sorted(agent.last_samples) == [0, 1, 2]


class TestPEGPUCB:
    def test_zero_data_argmax_of_prior_ucb(self):
        n = 5
        mean = np.array([0.0, 0.4, 0.0, 0.0, 0.2])
        cov = np.diag([0.1, 0.1, 0.5, 0.1, 0.1])
        hp = hyperprior_from_moments([(mean, cov)])
        agent = PEGPUCB(hp, NOISE_VAR, np.random.default_rng(0), 10, DELTA)
        arm, prior = agent.select(1)
        ucb = mean + np.sqrt(agent.schedule.beta(1)) * np.sqrt(np.diag(cov))
        assert arm == int(np.argmax(ucb))

    def test_uniformly_wider_prior_dominates_selection(self):
        arms = np.linspace(0.0, 10.0, 3)[:, None]
        base = gram_matrix(KernelSpec("rbf", lengthscale=2.0), arms)
        hp = hyperprior_from_moments([(np.zeros(3), base), (np.zeros(3), 4.0 * base)])
        agent = PEGPUCB(hp, NOISE_VAR, np.random.default_rng(0), 40, DELTA)
        for t in range(1, 31):
            arm, prior = agent.select(t)
            wide = np.sqrt(agent.banks[1].var)
            narrow = np.sqrt(agent.banks[0].var)
            assert np.all(wide >= narrow - 1e-12)
            assert prior == 1
            agent.observe(t, arm, 0.0)
            if 1 in agent.eliminated:
                pytest.fail("zero-mean rewards should not eliminate prior 1")


class TestHyperposterior:
    def test_identical_priors_stay_uniform(self):
        n = 10
        arms = np.linspace(0.0, 20.0, n)[:, None]
        cov = gram_matrix(KernelSpec("rbf"), arms)
        hp = hyperprior_from_moments([(np.zeros(n), cov)] * 1)
        hp = Hyperprior(
            priors=tuple(
                MaterializedPrior.from_moments(f"p{i}", np.zeros(n), cov)
                for i in range(4)
            ),
            weights=np.full(4, 0.25),
        )
        agent = HPGPTS(hp, NOISE_VAR, np.random.default_rng(3), 20)
        for t in range(1, 8):
            arm, _ = agent.select(t)
            agent.observe(t, arm, 0.3)
        np.testing.assert_allclose(agent.weights(), 0.25, atol=1e-12)

    def test_three_to_one_likelihood_ratio(self):
        hp = rbf_hyperprior(count=2)
        agent = HPGPTS(hp, NOISE_VAR, np.random.default_rng(4), 10)
        agent.apply_log_likelihoods(np.log(np.array([3.0, 1.0])))
        np.testing.assert_allclose(agent.weights(), [0.75, 0.25], atol=1e-12)

    def test_uniform_entropy_over_six(self):
        arms = np.linspace(0.0, 20.0, 8)[:, None]
        cov = gram_matrix(KernelSpec("rbf"), arms)
        hp = Hyperprior(
            priors=tuple(
                MaterializedPrior.from_moments(f"p{i}", np.zeros(8), cov)
                for i in range(6)
            ),
            weights=np.full(6, 1 / 6),
        )
        agent = HPGPTS(hp, NOISE_VAR, np.random.default_rng(5), 10)
        assert agent.entropy() == pytest.approx(np.log(6.0), abs=1e-12)
        assert agent.entropy() == pytest.approx(1.7918, abs=1e-4)

    def test_weight_fuzz_stays_normalized(self):
        hp = rbf_hyperprior(count=5)
        agent = HPGPTS(hp, NOISE_VAR, np.random.default_rng(6), 10)
        rng = np.random.default_rng(99)
        for _ in range(100_000):
            logliks = rng.uniform(-690.0, 690.0, size=5)  # ratios up to 1e300
            agent.apply_log_likelihoods(logliks)
            w = agent.weights()
            assert np.all(np.isfinite(w))
            assert abs(w.sum() - 1.0) <= 1e-12

    def test_probability_matching_chi_square(self):
        hp = rbf_hyperprior(count=3)
        agent = HPGPTS(hp, NOISE_VAR, np.random.default_rng(7), 10)
        agent.log_weights = np.log(np.array([0.5, 0.3, 0.2]))
        draws = 20000
        counts = np.zeros(3)
        for _ in range(draws):
            _, prior = agent.select(1)
            counts[prior] += 1
        stat = chisquare(counts, f_exp=draws * np.array([0.5, 0.3, 0.2]))
        assert stat.pvalue > 1e-3


class TestMAP:
    def test_uniform_tie_breaks_to_first(self):
        hp = rbf_hyperprior(count=3)
        agent = MAPGPTS(hp, NOISE_VAR, np.random.default_rng(8), 10)
        _, prior = agent.select(1)
        assert prior == 0

    def test_argmax_weight_selected(self):
        hp = rbf_hyperprior(count=3)
        agent = MAPGPTS(hp, NOISE_VAR, np.random.default_rng(9), 10)
        agent.log_weights = np.log(np.array([0.2, 0.7, 0.1]))
        _, prior = agent.select(1)
        assert prior == 1

    def test_dominant_prior_after_update(self):
        hp = rbf_hyperprior(count=3)
        agent = MAPGPTS(hp, NOISE_VAR, np.random.default_rng(10), 10)
        agent.apply_log_likelihoods(np.array([0.0, 0.0, 5.0]))
        _, prior = agent.select(1)
        assert prior == 2


class TestOracles:
    def test_oracle_ts_probability_matching_at_first_step(self):
        n = 5
        arms = np.linspace(0.0, 4.0, n)[:, None]
        cov = gram_matrix(KernelSpec("rbf", lengthscale=1.0), arms)
        hp = hyperprior_from_moments([(np.zeros(n), cov)])
        agent = make_agent(
            "oracle-gp-ts", hp, NOISE_VAR, DELTA, 10,
            np.random.default_rng(11), true_prior_idx=0,
        )
        draws = 50000
        counts = np.zeros(n)
        for _ in range(draws):
            arm, _ = agent.select(1)
            counts[arm] += 1
        ref_rng = np.random.default_rng(12)
        prior = hp.priors[0]
        samples = prior.mean[None, :] + (
            prior.chol @ ref_rng.standard_normal((n, draws))
        ).T
        ref_counts = np.bincount(np.argmax(samples, axis=1), minlength=n)
        p = counts / draws
        q = ref_counts / draws
        pooled_se = np.sqrt((p * (1 - p) + q * (1 - q)) / draws)
        assert np.all(np.abs(p - q) <= 3 * pooled_se + 1e-9)

    def test_oracle_ucb_hand_computed_choice(self):
        # 2 arms, 1 observation; dense posterior decides the next pull
        arms = np.array([[0.0], [1.0]])
        cov = gram_matrix(KernelSpec("rbf", lengthscale=1.0), arms)
        hp = hyperprior_from_moments([(np.zeros(2), cov)])
        agent = make_agent(
            "oracle-gp-ucb", hp, NOISE_VAR, DELTA, 10,
            np.random.default_rng(13), true_prior_idx=0,
        )
        t1_arm, _ = agent.select(1)
        assert t1_arm == 0  # exact tie at t=1 breaks to the lowest arm
        agent.observe(1, 0, 2.0)
        k01 = cov[0, 1]
        mu = np.array([2.0 / 1.0625, k01 * 2.0 / 1.0625])
        var = np.array([1.0 - 1.0 / 1.0625, 1.0 - k01**2 / 1.0625])
        beta2 = ConfidenceSchedule(DELTA, 2, 1, NOISE_VAR).beta(2)
        expected = int(np.argmax(mu + np.sqrt(beta2) * np.sqrt(var)))
        arm, _ = agent.select(2)
        assert arm == expected

    def test_oracle_requires_prior(self):
        hp = rbf_hyperprior(count=2)
        with pytest.raises(ValueError, match="true prior"):
            make_agent("oracle-gp-ts", hp, NOISE_VAR, DELTA, 5,
                       np.random.default_rng(0), true_prior_idx=None)

    def test_pinned_oracle(self):
        hp = rbf_hyperprior(count=2)
        agent = make_agent("oracle-gp-ts@1", hp, NOISE_VAR, DELTA, 5,
                           np.random.default_rng(0), true_prior_idx=None)
        assert agent.name == "oracle-gp-ts@1"
        assert agent.banks[0].prior.id == "p1"

    def test_unknown_agent_rejected(self):
        hp = rbf_hyperprior(count=2)
        with pytest.raises(ValueError, match="unknown agent"):
            make_agent("gp-ei", hp, NOISE_VAR, DELTA, 5,
                       np.random.default_rng(0), true_prior_idx=0)
