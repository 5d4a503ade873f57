"""GP bandits with joint prior selection and regret benchmarking."""

from .agents import AGENT_NAMES, ConfidenceSchedule, make_agent
from .environment import (
    Environment,
    EpisodeRecord,
    ExperimentPlan,
    build_experiment,
    run_episode,
    run_experiment,
    sample_environment,
)
from .gp import IllConditionedPrior, MaterializedPrior, PosteriorState
from .kernels import KernelSpec, eval_kernel, gram_matrix
from .metrics import greedy_mig, mig_table, summarize
from .priors import Hyperprior, empirical_prior_set, load_bucketed_csv

__version__ = "0.1.0"

__all__ = [
    "AGENT_NAMES",
    "ConfidenceSchedule",
    "Environment",
    "EpisodeRecord",
    "ExperimentPlan",
    "Hyperprior",
    "IllConditionedPrior",
    "KernelSpec",
    "MaterializedPrior",
    "PosteriorState",
    "build_experiment",
    "empirical_prior_set",
    "eval_kernel",
    "gram_matrix",
    "greedy_mig",
    "load_bucketed_csv",
    "make_agent",
    "mig_table",
    "run_episode",
    "run_experiment",
    "sample_environment",
    "summarize",
]
