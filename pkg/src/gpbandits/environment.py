"""Ground-truth sampling, episode execution and experiment configuration.

An :class:`Environment` fixes everything random about one problem instance:
the drawn prior, the reward function over the arms and the per-step noise
sequence.  All agents compared under one seed face the identical instance
(common random numbers), so regret comparisons are paired; agent-internal
randomness comes from separate streams.
"""

from __future__ import annotations

import functools
import os
from dataclasses import dataclass, replace
from multiprocessing import get_context

import numpy as np

from .agents import Agent, make_agent
from .gp import IllConditionedPrior
from .priors import (
    Hyperprior,
    empirical_prior_set,
    kernel_prior_set,
    lengthscale_prior_set,
    load_bucketed_csv,
    scaling_lengthscales,
    subspace_prior_set,
)

__all__ = [
    "Environment",
    "EpisodeRecord",
    "ExperimentPlan",
    "sample_environment",
    "environment_from_measurement",
    "run_episode",
    "build_experiment",
    "materialize_plan",
    "run_experiment",
    "DEFAULT_ROSTER",
    "SETUP_NAMES",
]

SETUP_NAMES = (
    "kernel",
    "lengthscale",
    "subspace",
    "lengthscale-scaling",
    "subspace-scaling",
    "bucketed-data",
)

DEFAULT_ROSTER = (
    "hp-gp-ts",
    "map-gp-ts",
    "pe-gp-ts",
    "pe-gp-ucb",
    "oracle-gp-ts",
    "oracle-gp-ucb",
)

# Oracles need a true prior, which bucketed data does not have.
BUCKETED_ROSTER = ("hp-gp-ts", "map-gp-ts", "pe-gp-ts", "pe-gp-ucb")


@dataclass(frozen=True)
class Environment:
    """One sampled problem instance served to a roster of agents."""

    true_prior_idx: int | None
    f: np.ndarray  # (n,) expected reward at each arm
    noise_var: float
    eps: np.ndarray  # (T,) per-step reward noise, shared across agents
    x_star: int
    f_star: float

    def reward(self, arm: int, t: int) -> float:
        """Noisy reward for selecting ``arm`` at 1-based step ``t``."""
        return float(self.f[arm] + self.eps[t - 1])


def sample_environment(
    hyperprior: Hyperprior, noise_var: float, horizon: int, rng: np.random.Generator
) -> Environment:
    """Draw the true prior, the reward function and the noise sequence."""
    p_star = int(rng.choice(len(hyperprior), p=hyperprior.weights))
    prior = hyperprior.priors[p_star]
    f = prior.mean + prior.chol @ rng.standard_normal(prior.num_arms)
    eps = rng.standard_normal(horizon) * np.sqrt(noise_var)
    x_star = int(np.argmax(f))
    return Environment(
        true_prior_idx=p_star,
        f=f,
        noise_var=float(noise_var),
        eps=eps,
        x_star=x_star,
        f_star=float(f[x_star]),
    )


def environment_from_measurement(
    measurement: np.ndarray, noise_var: float, horizon: int, rng: np.random.Generator
) -> Environment:
    """Wrap a fixed measurement vector as the reward function."""
    f = np.ascontiguousarray(measurement, dtype=np.float64)
    eps = rng.standard_normal(horizon) * np.sqrt(noise_var)
    x_star = int(np.argmax(f))
    return Environment(
        true_prior_idx=None,
        f=f,
        noise_var=float(noise_var),
        eps=eps,
        x_star=x_star,
        f_star=float(f[x_star]),
    )


@dataclass
class EpisodeRecord:
    """Per-step trace of one (seed, agent) episode."""

    seed: int
    agent: str
    setup: str
    horizon: int
    p_star: int  # -1 when the instance has no true prior
    x_star: int
    f_star: float
    arm: np.ndarray  # (steps,) selected arm indices
    prior: np.ndarray  # (steps,) selected prior indices, -1 for none
    reward: np.ndarray
    instant_regret: np.ndarray
    cum_regret: np.ndarray
    active_priors: np.ndarray  # (steps,) -1 when not applicable
    entropy: np.ndarray  # (steps,) nan when not applicable
    u_gap_pstar: np.ndarray = None  # type: ignore[assignment]  # (steps,) nan when n/a
    aborted: bool = False
    abort_reason: str = ""
    sum_var_pstar_xstar: float = float("nan")
    pstar_eliminated: bool | None = None

    @property
    def steps(self) -> int:
        return self.arm.shape[0]

    @property
    def final_regret(self) -> float:
        return float(self.cum_regret[-1]) if self.steps else 0.0


def run_episode(
    env: Environment,
    agent: Agent,
    horizon: int,
    seed: int = 0,
    setup: str = "",
    step_hook=None,
) -> EpisodeRecord:
    """Alternate select / reward / observe for ``horizon`` steps.

    ``step_hook(t, agent, env, arm, prior)`` fires after selection and before
    the observation is applied, while all posteriors still reflect the first
    t - 1 rewards.
    """
    if horizon < 1:
        raise ValueError(f"horizon must be >= 1, got {horizon}")
    arms = np.empty(horizon, dtype=np.intp)
    priors = np.full(horizon, -1, dtype=np.intp)
    rewards = np.empty(horizon)
    instant = np.empty(horizon)
    active = np.full(horizon, -1, dtype=np.intp)
    entropy = np.full(horizon, np.nan)
    u_gap = np.full(horizon, np.nan)
    num_arms = env.f.shape[0]
    p_star = env.true_prior_idx
    track_var = p_star is not None
    var_sum = 0.0
    steps = 0
    aborted = False
    reason = ""
    for t in range(1, horizon + 1):
        try:
            arm, prior = agent.select(t)
        except IllConditionedPrior as exc:
            aborted, reason = True, str(exc)
            break
        if step_hook is not None:
            step_hook(t, agent, env, arm, prior)
        count = agent.active_count()
        if count is not None:
            active[t - 1] = count
        ent = agent.entropy()
        if ent is not None:
            entropy[t - 1] = ent
            # Analysis-only diagnostic: gap between the confidence values of
            # the true and selected priors at the best arm ("cost of learning
            # the prior"); reported, never asserted.
            if p_star is not None and prior is not None and prior < len(agent.banks):
                width = np.sqrt(
                    max(2.0 * np.log(num_arms * t**2 / np.sqrt(2 * np.pi)), 0.0)
                )
                true_bank = agent.banks[p_star]
                sel_bank = agent.banks[prior]
                u_true = true_bank.mean[env.x_star] + width * np.sqrt(
                    true_bank.var[env.x_star]
                )
                u_sel = sel_bank.mean[env.x_star] + width * np.sqrt(
                    sel_bank.var[env.x_star]
                )
                u_gap[t - 1] = u_true - u_sel
        if track_var:
            v = agent.posterior_var_at(p_star, env.x_star)
            if v is not None:
                var_sum += v
            else:
                track_var = False
        y = env.reward(arm, t)
        try:
            agent.observe(t, arm, y)
        except IllConditionedPrior as exc:
            aborted, reason = True, str(exc)
            break
        arms[t - 1] = arm
        priors[t - 1] = prior if prior is not None else -1
        rewards[t - 1] = y
        instant[t - 1] = env.f_star - env.f[arm]
        steps = t
        if agent.aborted:
            aborted, reason = True, agent.abort_reason
            break
    pstar_elim = None
    if p_star is not None and hasattr(agent, "eliminated"):
        pstar_elim = p_star in agent.eliminated
    return EpisodeRecord(
        seed=seed,
        agent=agent.name,
        setup=setup,
        horizon=horizon,
        p_star=p_star if p_star is not None else -1,
        x_star=env.x_star,
        f_star=env.f_star,
        arm=arms[:steps].copy(),
        prior=priors[:steps].copy(),
        reward=rewards[:steps].copy(),
        instant_regret=instant[:steps].copy(),
        cum_regret=np.cumsum(instant[:steps]),
        active_priors=active[:steps].copy(),
        entropy=entropy[:steps].copy(),
        u_gap_pstar=u_gap[:steps].copy(),
        aborted=aborted,
        abort_reason=reason,
        sum_var_pstar_xstar=var_sum if (env.true_prior_idx is not None and track_var) else float("nan"),
        pstar_eliminated=pstar_elim,
    )


# -- experiment plans --------------------------------------------------------


@dataclass(frozen=True)
class ExperimentPlan:
    """Fully resolved, hashable description of one experiment."""

    setup: str
    horizon: int = 500
    num_arms: int = 500
    num_priors: int | None = None
    delta: float = 0.05
    noise_var: float = 0.25**2
    num_seeds: int = 100
    seed_base: int = 0
    agents: tuple[str, ...] = DEFAULT_ROSTER
    prior_csv: str | None = None
    test_csv: str | None = None
    log_transform: bool = False
    ridge: float = 1e-6

    def seeds(self) -> list[int]:
        return [self.seed_base + i for i in range(self.num_seeds)]


def build_experiment(
    setup: str,
    horizon: int | None = None,
    num_arms: int | None = None,
    num_priors: int | None = None,
    delta: float | None = None,
    noise_var: float | None = None,
    num_seeds: int | None = None,
    seed_base: int | None = None,
    agents: tuple[str, ...] | None = None,
    prior_csv: str | None = None,
    test_csv: str | None = None,
    log_transform: bool = False,
    ridge: float | None = None,
) -> ExperimentPlan:
    """Resolve a setup name plus overrides into a runnable plan."""
    if setup not in SETUP_NAMES:
        raise ValueError(f"unknown setup {setup!r}; expected one of {SETUP_NAMES}")
    plan = ExperimentPlan(setup=setup)
    if setup == "lengthscale":
        plan = replace(plan, num_priors=4)
    elif setup == "kernel":
        plan = replace(plan, num_priors=6)
    elif setup == "subspace":
        plan = replace(plan, num_priors=5)
    elif setup == "lengthscale-scaling":
        plan = replace(plan, num_priors=8)
    elif setup == "subspace-scaling":
        plan = replace(plan, num_priors=5)
    else:  # bucketed-data
        if prior_csv is None or test_csv is None:
            raise ValueError("bucketed-data requires prior_csv and test_csv paths")
        if noise_var is None:
            raise ValueError("bucketed-data requires an explicit noise_var")
        plan = replace(
            plan,
            agents=BUCKETED_ROSTER,
            prior_csv=str(prior_csv),
            test_csv=str(test_csv),
            log_transform=bool(log_transform),
        )
    overrides = dict(
        horizon=horizon,
        num_arms=num_arms,
        delta=delta,
        noise_var=noise_var,
        num_seeds=num_seeds,
        seed_base=seed_base,
        ridge=ridge,
    )
    for key, value in overrides.items():
        if value is not None:
            plan = replace(plan, **{key: value})
    if num_priors is not None:
        if setup in ("kernel", "bucketed-data"):
            raise ValueError(f"setup {setup!r} does not take a prior-count override")
        plan = replace(plan, num_priors=int(num_priors))
    if agents is not None:
        plan = replace(plan, agents=tuple(agents))
    _validate_plan(plan)
    return plan


def _validate_plan(plan: ExperimentPlan) -> None:
    if plan.horizon < 1 or plan.num_arms < 1:
        raise ValueError("horizon and num_arms must be >= 1")
    if plan.num_seeds < 1:
        raise ValueError("num_seeds must be >= 1")
    if plan.noise_var <= 0:
        raise ValueError("noise_var must be > 0")
    if not 0 < plan.delta < 1:
        raise ValueError("delta must be in (0, 1)")
    if not plan.agents:
        raise ValueError("empty agent roster")
    if plan.setup == "lengthscale-scaling" and plan.num_priors < 2:
        raise ValueError("lengthscale-scaling needs num_priors >= 2")
    if plan.setup in ("subspace", "subspace-scaling") and not 5 <= plan.num_priors <= 16:
        raise ValueError("subspace setups support 5..16 priors")


@functools.lru_cache(maxsize=8)
def materialize_plan(plan: ExperimentPlan) -> tuple[Hyperprior, np.ndarray, list]:
    """Build (hyperprior, arms, test measurements) for a plan, cached per process."""
    test_bank: list[np.ndarray] = []
    if plan.setup == "bucketed-data":
        data = load_bucketed_csv(plan.prior_csv, log_transform=plan.log_transform)
        hyperprior = empirical_prior_set(data, ridge=plan.ridge)
        test_data = load_bucketed_csv(plan.test_csv, log_transform=plan.log_transform)
        if test_data.num_arms != data.num_arms:
            raise ValueError(
                f"test file covers {test_data.num_arms} arms, priors cover {data.num_arms}"
            )
        for _, stack in sorted(test_data.buckets.items()):
            test_bank.extend(stack)
        arms = np.arange(data.num_arms, dtype=np.float64)[:, None]
        return hyperprior, arms, test_bank

    if plan.setup in ("kernel", "lengthscale", "lengthscale-scaling"):
        arms = np.linspace(0.0, 20.0, plan.num_arms)[:, None]
    else:  # subspace domains: arms sampled uniformly, fixed by the seed base
        arm_rng = np.random.default_rng(
            np.random.SeedSequence((plan.seed_base, plan.num_arms, 16))
        )
        arms = arm_rng.uniform(0.0, 20.0, size=(plan.num_arms, 16))

    if plan.setup == "kernel":
        hyperprior = kernel_prior_set(arms)
    elif plan.setup == "lengthscale":
        if plan.num_priors == 4:
            hyperprior = lengthscale_prior_set(arms)
        else:
            hyperprior = lengthscale_prior_set(
                arms, scaling_lengthscales(plan.num_priors)
            )
    elif plan.setup == "lengthscale-scaling":
        hyperprior = lengthscale_prior_set(arms, scaling_lengthscales(plan.num_priors))
    else:
        hyperprior = subspace_prior_set(arms, num_priors=plan.num_priors)
    return hyperprior, arms, test_bank


def _environment_for_seed(
    plan: ExperimentPlan,
    hyperprior: Hyperprior,
    test_bank: list,
    env_rng: np.random.Generator,
) -> Environment:
    if plan.setup == "bucketed-data":
        idx = int(env_rng.integers(len(test_bank)))
        return environment_from_measurement(
            test_bank[idx], plan.noise_var, plan.horizon, env_rng
        )
    return sample_environment(hyperprior, plan.noise_var, plan.horizon, env_rng)


def run_seed(plan: ExperimentPlan, seed: int, step_hook=None) -> list[EpisodeRecord]:
    """Run the full roster against the one instance drawn for ``seed``."""
    hyperprior, _, test_bank = materialize_plan(plan)
    streams = np.random.SeedSequence(seed).spawn(1 + len(plan.agents))
    env = _environment_for_seed(
        plan, hyperprior, test_bank, np.random.default_rng(streams[0])
    )
    records = []
    for pos, name in enumerate(plan.agents):
        agent = make_agent(
            name,
            hyperprior,
            plan.noise_var,
            plan.delta,
            plan.horizon,
            np.random.default_rng(streams[1 + pos]),
            true_prior_idx=env.true_prior_idx,
        )
        records.append(
            run_episode(
                env,
                agent,
                plan.horizon,
                seed=seed,
                setup=plan.setup,
                step_hook=step_hook,
            )
        )
    return records


def _run_seed_star(args: tuple[ExperimentPlan, int]) -> list[EpisodeRecord]:
    return run_seed(*args)


def run_experiment(
    plan: ExperimentPlan, workers: int | None = None
) -> list[EpisodeRecord]:
    """Run every (seed, agent) episode; rows come back sorted by (seed, agent)."""
    seeds = plan.seeds()
    workers = workers if workers is not None else (os.cpu_count() or 1)
    if workers <= 1 or len(seeds) == 1:
        nested = [run_seed(plan, s) for s in seeds]
    else:
        ctx = get_context("spawn")
        chunk = max(1, len(seeds) // (4 * workers))
        with ctx.Pool(processes=workers) as pool:
            nested = pool.map(
                _run_seed_star, [(plan, s) for s in seeds], chunksize=chunk
            )
    records = [rec for group in nested for rec in group]
    records.sort(key=lambda r: (r.seed, r.agent))
    return records
