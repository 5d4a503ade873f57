"""Prior-set construction: synthetic families and empirical priors from data.

Three synthetic setups are provided.  The *kernel* setup varies the
covariance family over six zero-mean priors, the *lengthscale* setup varies
the RBF lengthscale, and the *subspace* setup varies which four input
dimensions each prior believes the function depends on.  Empirical priors
come from a bucketed CSV: per bucket, the per-arm sample mean and the ridge-
regularized unbiased sample covariance define one GP prior.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .gp import MaterializedPrior
from .kernels import KernelSpec, gram_matrix

__all__ = [
    "Hyperprior",
    "BucketedDataset",
    "kernel_prior_set",
    "lengthscale_prior_set",
    "subspace_prior_set",
    "subspace_dimension_lists",
    "empirical_prior_set",
    "load_bucketed_csv",
]


@dataclass(frozen=True)
class Hyperprior:
    """An ordered prior set with a probability vector over it."""

    priors: tuple[MaterializedPrior, ...]
    weights: np.ndarray

    def __post_init__(self) -> None:
        w = np.ascontiguousarray(self.weights, dtype=np.float64)
        if len(self.priors) < 1:
            raise ValueError("hyperprior needs at least one prior")
        if w.shape != (len(self.priors),):
            raise ValueError("weights length must match number of priors")
        if np.any(w < 0) or abs(float(w.sum()) - 1.0) > 1e-12:
            raise ValueError("weights must be nonnegative and sum to 1")
        ids = [p.id for p in self.priors]
        if len(set(ids)) != len(ids):
            raise ValueError(f"prior ids must be unique, got {ids}")
        object.__setattr__(self, "weights", w)

    def __len__(self) -> int:
        return len(self.priors)

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(p.id for p in self.priors)

    @property
    def max_variance(self) -> float:
        return max(p.max_variance for p in self.priors)


def _uniform(priors: list[MaterializedPrior]) -> Hyperprior:
    k = len(priors)
    return Hyperprior(priors=tuple(priors), weights=np.full(k, 1.0 / k))


def _zero_mean_prior(id: str, spec: KernelSpec, arms: np.ndarray) -> MaterializedPrior:
    cov = gram_matrix(spec, arms)
    return MaterializedPrior.from_moments(id, np.zeros(cov.shape[0]), cov)


def kernel_prior_set(arms: np.ndarray) -> Hyperprior:
    """Six zero-mean priors differing only in covariance family."""
    specs = [
        ("rbf", KernelSpec("rbf", lengthscale=1.0)),
        ("rq", KernelSpec("rq", lengthscale=1.0, alpha=0.5)),
        ("matern52", KernelSpec("matern52", lengthscale=1.0)),
        ("matern32", KernelSpec("matern32", lengthscale=1.0)),
        ("periodic", KernelSpec("periodic", lengthscale=1.0, period=5.0)),
        ("linear", KernelSpec("linear", variance=0.05**2)),
    ]
    return _uniform([_zero_mean_prior(name, spec, arms) for name, spec in specs])


def lengthscale_prior_set(
    arms: np.ndarray, lengthscales: tuple[float, ...] = (4.0, 2.0, 1.0, 0.5)
) -> Hyperprior:
    """Zero-mean RBF priors, one per lengthscale."""
    if len(lengthscales) < 1 or any(l <= 0 for l in lengthscales):
        raise ValueError(f"invalid lengthscale list {lengthscales}")
    priors = [
        _zero_mean_prior(f"rbf-l{l:g}", KernelSpec("rbf", lengthscale=l), arms)
        for l in lengthscales
    ]
    return _uniform(priors)


def scaling_lengthscales(num_priors: int) -> tuple[float, ...]:
    """``num_priors`` lengthscales equidistantly spaced in [0.5, 4]."""
    if num_priors < 2:
        raise ValueError("lengthscale scaling needs at least 2 priors")
    return tuple(np.linspace(0.5, 4.0, num_priors))


def subspace_dimension_lists(num_priors: int) -> list[tuple[int, ...]]:
    """Wrapped 4-dimension windows over a cycle of length ``num_priors``.

    Window i covers dimensions ((i + j - 1) mod num_priors) + 1 for
    j = 0..3 (1-based).  Consecutive windows share 3 dimensions and no two
    windows share all 4; duplicates (which appear below 5 priors) are
    rejected.
    """
    if not 5 <= num_priors <= 16:
        raise ValueError(
            f"subspace prior count {num_priors} outside supported range [5, 16]"
        )
    windows: list[tuple[int, ...]] = []
    seen: set[frozenset[int]] = set()
    for i in range(1, num_priors + 1):
        dims = tuple(((i + j - 1) % num_priors) + 1 for j in range(4))
        key = frozenset(dims)
        if key in seen:
            raise ValueError(f"duplicate subspace window at prior {i}: {dims}")
        seen.add(key)
        windows.append(dims)
    return windows


def subspace_prior_set(
    arms: np.ndarray, num_priors: int = 5, lengthscale: float = 8.0
) -> Hyperprior:
    """Zero-mean RBF priors restricted to wrapped 4-dimension windows."""
    priors = []
    for dims in subspace_dimension_lists(num_priors):
        spec = KernelSpec("rbf", lengthscale=lengthscale, active_dims=dims)
        label = "dims-" + "-".join(str(d) for d in dims)
        priors.append(_zero_mean_prior(label, spec, arms))
    return _uniform(priors)


# -- empirical priors from bucketed data ------------------------------------


@dataclass(frozen=True)
class BucketedDataset:
    """Per-bucket stacks of complete arm measurements.

    ``buckets`` maps bucket id to an (m, n) array: m samples, n arms.
    """

    buckets: dict[str, np.ndarray]
    num_arms: int

    def __post_init__(self) -> None:
        if not self.buckets:
            raise ValueError("dataset has no buckets")
        for bucket_id, values in self.buckets.items():
            if values.ndim != 2 or values.shape[1] != self.num_arms:
                raise ValueError(
                    f"bucket {bucket_id!r} shape {values.shape} does not cover "
                    f"{self.num_arms} arms"
                )
            if values.shape[0] < 2:
                raise ValueError(
                    f"bucket {bucket_id!r} has {values.shape[0]} samples; "
                    "covariance needs at least 2"
                )


def load_bucketed_csv(path, log_transform: bool = False) -> BucketedDataset:
    """Read ``bucket_id,sample_id,arm_id,value`` rows into per-bucket stacks.

    ``arm_id`` must be 0-based and contiguous and every (bucket, sample) pair
    must cover all arms exactly once.  With ``log_transform`` each value is
    mapped through ``log(value / 10 + 0.1)`` before stacking.
    """
    cells: dict[tuple[str, str], dict[int, float]] = {}
    arm_ids: set[int] = set()
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        expected = ["bucket_id", "sample_id", "arm_id", "value"]
        if reader.fieldnames is None or list(reader.fieldnames) != expected:
            raise ValueError(
                f"{path}: header must be {','.join(expected)}, got {reader.fieldnames}"
            )
        for row in reader:
            arm = int(row["arm_id"])
            value = float(row["value"])
            if log_transform:
                value = float(np.log(value / 10.0 + 0.1))
            key = (row["bucket_id"], row["sample_id"])
            per_arm = cells.setdefault(key, {})
            if arm in per_arm:
                raise ValueError(f"{path}: duplicate arm {arm} in sample {key}")
            per_arm[arm] = value
            arm_ids.add(arm)
    if not cells:
        raise ValueError(f"{path}: no data rows")
    num_arms = len(arm_ids)
    if arm_ids != set(range(num_arms)):
        raise ValueError(f"{path}: arm ids must be 0-based and contiguous")
    buckets: dict[str, list[np.ndarray]] = {}
    for (bucket_id, sample_id), per_arm in sorted(cells.items()):
        if len(per_arm) != num_arms:
            raise ValueError(
                f"{path}: sample ({bucket_id}, {sample_id}) covers "
                f"{len(per_arm)}/{num_arms} arms"
            )
        vec = np.array([per_arm[a] for a in range(num_arms)])
        buckets.setdefault(bucket_id, []).append(vec)
    stacked = {b: np.vstack(rows) for b, rows in buckets.items()}
    return BucketedDataset(buckets=stacked, num_arms=num_arms)


def empirical_prior_set(data: BucketedDataset, ridge: float = 1e-6) -> Hyperprior:
    """One GP prior per bucket from sample mean and covariance.

    The covariance is the unbiased (m - 1 denominator) estimator plus
    ``ridge * mean(diag)`` on the diagonal; all-identical samples degrade to
    a 1e-6 identity floor so the prior stays factorizable.
    """
    if ridge <= 0:
        raise ValueError(f"ridge must be > 0, got {ridge}")
    priors = []
    for bucket_id, values in sorted(data.buckets.items()):
        mean = values.mean(axis=0)
        centered = values - mean
        cov = centered.T @ centered / (values.shape[0] - 1)
        cov = 0.5 * (cov + cov.T)
        mean_diag = float(np.mean(np.diag(cov)))
        bump = ridge * mean_diag if mean_diag > 0 else 1e-6
        cov += bump * np.eye(data.num_arms)
        priors.append(MaterializedPrior.from_moments(f"bucket-{bucket_id}", mean, cov))
    return _uniform(priors)
