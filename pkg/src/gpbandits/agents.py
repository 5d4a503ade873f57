"""Decision policies over a shared bank of per-prior GP posteriors.

Six policies are implemented:

* ``pe-gp-ts`` -- posterior sampling jointly over (arm, prior) with
  cumulative-prediction-error elimination of priors;
* ``pe-gp-ucb`` -- the same elimination rule driven by the joint upper
  confidence bound instead of posterior samples;
* ``hp-gp-ts`` -- bi-level posterior sampling: a prior is drawn from the
  hyperposterior, then an arm from that prior's posterior sample;
* ``map-gp-ts`` -- as hp-gp-ts but the maximum-weight prior is used;
* ``oracle-gp-ts`` / ``oracle-gp-ucb`` -- single-prior references given the
  environment's true prior.

Every policy conditions the posterior of *every* prior it tracks on every
observation, so posteriors (and hence likelihoods and samples) always
reflect the full history.  Argmax tie-breaking is deterministic everywhere:
lowest arm index first, then lowest prior index.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .gp import MaterializedPrior, PosteriorState, PriorDrawBuffer
from .priors import Hyperprior

__all__ = [
    "ConfidenceSchedule",
    "Agent",
    "PEGPTS",
    "PEGPUCB",
    "HPGPTS",
    "MAPGPTS",
    "OracleGPTS",
    "OracleGPUCB",
    "AGENT_NAMES",
    "make_agent",
]


@dataclass(frozen=True)
class ConfidenceSchedule:
    """Deterministic confidence parameters for the elimination policies."""

    delta: float
    num_arms: int
    num_priors: int
    noise_var: float

    def __post_init__(self) -> None:
        if not 0.0 < self.delta < 1.0:
            raise ValueError(f"delta must be in (0, 1), got {self.delta}")

    def beta(self, t: int) -> float:
        """Arm/prior confidence width used by the acting policies."""
        return 2.0 * np.log(
            2.0 * self.num_arms * self.num_priors * np.pi**2 * t**2 / (3.0 * self.delta)
        )

    def beta_concentration(self, t: int) -> float:
        """Width of the joint coverage event (no leading factor 2 inside)."""
        return 2.0 * np.log(
            self.num_arms * self.num_priors * np.pi**2 * t**2 / (3.0 * self.delta)
        )

    def xi(self, t: int) -> float:
        """Cumulative-noise allowance in the elimination threshold."""
        return (
            2.0
            * self.noise_var
            * np.log(self.num_priors * np.pi**2 * t**2 / (3.0 * self.delta))
        )


def _joint_argmax(values: np.ndarray, prior_ids: list[int]) -> tuple[int, int]:
    """Argmax over an (n, k) value table; ties favor low arm, then low prior.

    ``prior_ids`` maps column position to prior index (columns must be in
    ascending prior order for the tie-break to hold).
    """
    flat = int(np.argmax(values))
    arm, pos = divmod(flat, values.shape[1])
    return arm, prior_ids[pos]


class Agent:
    """Shared bank plumbing; subclasses implement select/observe."""

    name = "agent"

    def __init__(
        self,
        priors: tuple[MaterializedPrior, ...],
        noise_var: float,
        rng: np.random.Generator,
        horizon: int,
    ) -> None:
        self.noise_var = float(noise_var)
        self.rng = rng
        self.banks = [
            PosteriorState(p, noise_var, capacity=horizon + 1) for p in priors
        ]
        self._buffers = [PriorDrawBuffer(p, rng) for p in priors]
        self.aborted = False
        self.abort_reason = ""
        self.last_samples: dict[int, np.ndarray] = {}

    # -- policy API --------------------------------------------------------

    def select(self, t: int) -> tuple[int, int | None]:
        raise NotImplementedError

    def observe(self, t: int, arm: int, reward: float) -> None:
        raise NotImplementedError

    # -- diagnostics -------------------------------------------------------

    def active_count(self) -> int | None:
        return None

    def entropy(self) -> float | None:
        return None

    def posterior_var_at(self, prior_idx: int, arm: int) -> float | None:
        """Current posterior variance of a tracked prior at one arm."""
        if 0 <= prior_idx < len(self.banks):
            return float(self.banks[prior_idx].var[arm])
        return None

    # -- shared helpers ----------------------------------------------------

    def _sample(self, prior_idx: int) -> np.ndarray:
        bank = self.banks[prior_idx]
        return bank.sample_posterior(self.rng, prior_draw=self._buffers[prior_idx].next())

    def _condition_all(self, arm: int, reward: float) -> None:
        for bank in self.banks:
            bank.condition(arm, reward)


class _EliminationMixin:
    """Cumulative prediction-error bookkeeping shared by the PE policies."""

    def _init_elimination(self, num_priors: int, schedule: ConfidenceSchedule) -> None:
        self.schedule = schedule
        self.active: list[int] = list(range(num_priors))
        self.eliminated: set[int] = set()
        self.err_sum = np.zeros(num_priors)
        self.width_sum = np.zeros(num_priors)
        self.sel_count = np.zeros(num_priors, dtype=np.intp)
        self._pending: tuple[int, int] | None = None

    def active_count(self) -> int | None:
        return len(self.active)

    def _eliminate_update(self, t: int, arm: int, reward: float) -> None:
        """Apply the error/threshold update for the selected prior."""
        if self._pending is None or self._pending[0] != arm:
            raise RuntimeError("observe() without matching select()")
        p = self._pending[1]
        self._pending = None
        bank = self.banks[p]
        self.err_sum[p] += reward - bank.mean[arm]
        self.width_sum[p] += np.sqrt(self.schedule.beta(t)) * np.sqrt(bank.var[arm])
        self.sel_count[p] += 1
        threshold = (
            np.sqrt(self.schedule.xi(t) * self.sel_count[p]) + self.width_sum[p]
        )
        if abs(self.err_sum[p]) > threshold:
            self.active.remove(p)
            self.eliminated.add(p)
        if not self.active:
            self.aborted = True
            self.abort_reason = "all priors eliminated"
            return
        self._condition_all(arm, reward)


class PEGPTS(_EliminationMixin, Agent):
    """Joint (arm, prior) posterior sampling with prior elimination."""

    name = "pe-gp-ts"

    def __init__(self, hyperprior: Hyperprior, noise_var, rng, horizon, delta):
        super().__init__(hyperprior.priors, noise_var, rng, horizon)
        schedule = ConfidenceSchedule(
            delta, hyperprior.priors[0].num_arms, len(hyperprior), noise_var
        )
        self._init_elimination(len(hyperprior), schedule)

    def select(self, t: int) -> tuple[int, int | None]:
        self.last_samples = {p: self._sample(p) for p in self.active}
        values = np.column_stack([self.last_samples[p] for p in self.active])
        arm, prior = _joint_argmax(values, self.active)
        self._pending = (arm, prior)
        return arm, prior

    def observe(self, t: int, arm: int, reward: float) -> None:
        self._eliminate_update(t, arm, reward)


class PEGPUCB(_EliminationMixin, Agent):
    """Joint (arm, prior) upper-confidence-bound with prior elimination."""

    name = "pe-gp-ucb"

    def __init__(self, hyperprior: Hyperprior, noise_var, rng, horizon, delta):
        super().__init__(hyperprior.priors, noise_var, rng, horizon)
        schedule = ConfidenceSchedule(
            delta, hyperprior.priors[0].num_arms, len(hyperprior), noise_var
        )
        self._init_elimination(len(hyperprior), schedule)

    def select(self, t: int) -> tuple[int, int | None]:
        root_beta = np.sqrt(self.schedule.beta(t))
        values = np.column_stack(
            [
                self.banks[p].mean + root_beta * np.sqrt(self.banks[p].var)
                for p in self.active
            ]
        )
        arm, prior = _joint_argmax(values, self.active)
        self._pending = (arm, prior)
        return arm, prior

    def observe(self, t: int, arm: int, reward: float) -> None:
        self._eliminate_update(t, arm, reward)


class _HyperposteriorMixin:
    """Log-space Bayes updates over the prior set."""

    def _init_weights(self, hyperprior: Hyperprior) -> None:
        self.log_weights = np.log(hyperprior.weights)

    def weights(self) -> np.ndarray:
        w = np.exp(self.log_weights)
        return w / w.sum()

    def entropy(self) -> float | None:
        w = self.weights()
        nz = w[w > 0]
        return float(-(nz * np.log(nz)).sum())

    def apply_log_likelihoods(self, logliks: np.ndarray) -> None:
        self.log_weights = self.log_weights + logliks
        self.log_weights -= logsumexp(self.log_weights)

    def _bayes_update(self, arm: int, reward: float) -> None:
        self.apply_log_likelihoods(
            np.array([b.predictive_loglik(arm, reward) for b in self.banks])
        )
        self._condition_all(arm, reward)


class HPGPTS(_HyperposteriorMixin, Agent):
    """Bi-level posterior sampling: prior from the hyperposterior, then arm."""

    name = "hp-gp-ts"

    def __init__(self, hyperprior: Hyperprior, noise_var, rng, horizon):
        super().__init__(hyperprior.priors, noise_var, rng, horizon)
        self._init_weights(hyperprior)

    def select(self, t: int) -> tuple[int, int | None]:
        prior = int(self.rng.choice(len(self.banks), p=self.weights()))
        sample = self._sample(prior)
        self.last_samples = {prior: sample}
        return int(np.argmax(sample)), prior

    def observe(self, t: int, arm: int, reward: float) -> None:
        self._bayes_update(arm, reward)


class MAPGPTS(_HyperposteriorMixin, Agent):
    """As hp-gp-ts but greedily using the maximum-weight prior."""

    name = "map-gp-ts"

    def __init__(self, hyperprior: Hyperprior, noise_var, rng, horizon):
        super().__init__(hyperprior.priors, noise_var, rng, horizon)
        self._init_weights(hyperprior)

    def select(self, t: int) -> tuple[int, int | None]:
        prior = int(np.argmax(self.log_weights))
        sample = self._sample(prior)
        self.last_samples = {prior: sample}
        return int(np.argmax(sample)), prior

    def observe(self, t: int, arm: int, reward: float) -> None:
        self._bayes_update(arm, reward)


class OracleGPTS(Agent):
    """Posterior sampling given the true prior only."""

    name = "oracle-gp-ts"

    def __init__(self, prior: MaterializedPrior, noise_var, rng, horizon):
        super().__init__((prior,), noise_var, rng, horizon)

    def select(self, t: int) -> tuple[int, int | None]:
        sample = self._sample(0)
        self.last_samples = {0: sample}
        return int(np.argmax(sample)), None

    def observe(self, t: int, arm: int, reward: float) -> None:
        self._condition_all(arm, reward)

    def posterior_var_at(self, prior_idx: int, arm: int) -> float | None:
        return float(self.banks[0].var[arm])


class OracleGPUCB(Agent):
    """Upper confidence bound given the true prior only."""

    name = "oracle-gp-ucb"

    def __init__(self, prior: MaterializedPrior, noise_var, rng, horizon, delta):
        super().__init__((prior,), noise_var, rng, horizon)
        self.schedule = ConfidenceSchedule(delta, prior.num_arms, 1, noise_var)

    def select(self, t: int) -> tuple[int, int | None]:
        bank = self.banks[0]
        ucb = bank.mean + np.sqrt(self.schedule.beta(t)) * np.sqrt(bank.var)
        return int(np.argmax(ucb)), None

    def observe(self, t: int, arm: int, reward: float) -> None:
        self._condition_all(arm, reward)

    def posterior_var_at(self, prior_idx: int, arm: int) -> float | None:
        return float(self.banks[0].var[arm])


AGENT_NAMES = (
    "hp-gp-ts",
    "map-gp-ts",
    "pe-gp-ts",
    "pe-gp-ucb",
    "oracle-gp-ts",
    "oracle-gp-ucb",
)


def make_agent(
    name: str,
    hyperprior: Hyperprior,
    noise_var: float,
    delta: float,
    horizon: int,
    rng: np.random.Generator,
    true_prior_idx: int | None = None,
) -> Agent:
    """Build one policy instance; ``oracle-*@k`` pins the oracle to prior k."""
    base, _, pin = name.partition("@")
    if base in ("oracle-gp-ts", "oracle-gp-ucb"):
        idx = int(pin) if pin else true_prior_idx
        if idx is None:
            raise ValueError(
                f"{name}: oracle needs a true prior; pin one with {base}@<index>"
            )
        if not 0 <= idx < len(hyperprior):
            raise ValueError(f"{name}: prior index {idx} outside the prior set")
        prior = hyperprior.priors[idx]
        if base == "oracle-gp-ts":
            agent = OracleGPTS(prior, noise_var, rng, horizon)
        else:
            agent = OracleGPUCB(prior, noise_var, rng, horizon, delta)
        agent.name = name
        return agent
    if pin:
        raise ValueError(f"only oracle agents accept @<index>, got {name}")
    if base == "hp-gp-ts":
        return HPGPTS(hyperprior, noise_var, rng, horizon)
    if base == "map-gp-ts":
        return MAPGPTS(hyperprior, noise_var, rng, horizon)
    if base == "pe-gp-ts":
        return PEGPTS(hyperprior, noise_var, rng, horizon, delta)
    if base == "pe-gp-ucb":
        return PEGPUCB(hyperprior, noise_var, rng, horizon, delta)
    raise ValueError(f"unknown agent {name!r}; expected one of {AGENT_NAMES}")
