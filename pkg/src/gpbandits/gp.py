"""Exact GP posteriors over a finite arm set with incremental conditioning.

``PosteriorState`` keeps the Cholesky factor of the observed-block matrix
``K_obs + noise_var * I`` and extends it by one row per observation.  On top
of the factor it maintains the whitened cross-covariance ``M = L^-1 K(X, .)``
against *all* arms, which makes every per-step quantity cheap:

* posterior mean and variance at all arms update in O(n) once the new row of
  ``M`` (an O(n t) product) is known;
* joint posterior function draws use pathwise (Matheron) updating: a prior
  draw is corrected by ``M^T L^-1 (y - f0(X) - eps)``, costing O(t^2 + n t)
  per draw instead of refactorizing an n x n posterior covariance.

States are single-writer: one per (agent, prior) per episode.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

__all__ = [
    "IllConditionedPrior",
    "MaterializedPrior",
    "PosteriorState",
    "PriorDrawBuffer",
]

# Relative pivot floor before the rank-one extension falls back to a full
# refactorization of the observed block.
_PIVOT_RTOL = 1e-12


class IllConditionedPrior(RuntimeError):
    """Raised when the observed-block factorization cannot be maintained."""


@dataclass(frozen=True)
class MaterializedPrior:
    """A named GP prior realized as moments over the finite arm set."""

    id: str
    mean: np.ndarray  # (n,)
    cov: np.ndarray  # (n, n)
    jitter: float
    chol: np.ndarray  # lower factor of cov + jitter * I

    @classmethod
    def from_moments(
        cls, id: str, mean: np.ndarray, cov: np.ndarray, jitter_scale: float = 1e-8
    ) -> "MaterializedPrior":
        mean = np.ascontiguousarray(mean, dtype=np.float64)
        cov = np.ascontiguousarray(cov, dtype=np.float64)
        n = mean.shape[0]
        if cov.shape != (n, n):
            raise ValueError(f"cov shape {cov.shape} does not match mean length {n}")
        jitter = jitter_scale * max(float(np.max(np.diag(cov))), 1.0)
        try:
            chol = np.linalg.cholesky(cov + jitter * np.eye(n))
        except np.linalg.LinAlgError as exc:
            raise IllConditionedPrior(
                f"prior {id!r}: covariance not factorizable at jitter {jitter:g}"
            ) from exc
        return cls(id=id, mean=mean, cov=cov, jitter=jitter, chol=chol)

    @property
    def num_arms(self) -> int:
        return self.mean.shape[0]

    @property
    def max_variance(self) -> float:
        """Largest prior variance over arms (the sigma_0^2 of bound checks)."""
        return float(np.max(np.diag(self.cov)))


class PosteriorState:
    """Incremental GP posterior for one prior over the full arm set."""

    __slots__ = (
        "prior",
        "noise_var",
        "n",
        "t",
        "_cap",
        "_obs_idx",
        "_obs_y",
        "_L",
        "_M",
        "_w",
        "mean",
        "var",
    )

    def __init__(
        self, prior: MaterializedPrior, noise_var: float, capacity: int = 64
    ) -> None:
        if noise_var <= 0:
            raise ValueError(f"noise_var must be > 0, got {noise_var}")
        self.prior = prior
        self.noise_var = float(noise_var)
        self.n = prior.num_arms
        self.t = 0
        cap = max(int(capacity), 8)
        self._cap = cap
        self._obs_idx = np.empty(cap, dtype=np.intp)
        self._obs_y = np.empty(cap, dtype=np.float64)
        self._L = np.zeros((cap, cap), dtype=np.float64)
        self._M = np.empty((cap, self.n), dtype=np.float64)
        self._w = np.empty(cap, dtype=np.float64)
        self.mean = prior.mean.copy()
        self.var = np.diag(prior.cov).copy()

    # -- bookkeeping ------------------------------------------------------

    @property
    def obs_idx(self) -> np.ndarray:
        return self._obs_idx[: self.t]

    @property
    def obs_y(self) -> np.ndarray:
        return self._obs_y[: self.t]

    @property
    def chol_obs(self) -> np.ndarray:
        """Lower factor of the current ``K_obs + noise_var * I``."""
        return self._L[: self.t, : self.t]

    def _grow(self) -> None:
        old = self._cap
        cap = old * 2
        self._cap = cap
        for name, shape in (
            ("_obs_idx", (cap,)),
            ("_obs_y", (cap,)),
            ("_w", (cap,)),
            ("_M", (cap, self.n)),
        ):
            new = np.empty(shape, dtype=getattr(self, name).dtype)
            new[:old] = getattr(self, name)[:old]
            setattr(self, name, new)
        new_l = np.zeros((cap, cap), dtype=np.float64)
        new_l[:old, :old] = self._L[:old, :old]
        self._L = new_l

    # -- conditioning ------------------------------------------------------

    def condition(self, arm: int, reward: float) -> "PosteriorState":
        """Append one observation; O(n t) via rank-one Cholesky extension."""
        arm = int(arm)
        if not 0 <= arm < self.n:
            raise ValueError(f"arm index {arm} outside [0, {self.n})")
        t = self.t
        if t + 1 > self._cap:
            self._grow()
        g_row = self.prior.cov[arm]
        pivot_scale = g_row[arm] + self.noise_var
        if t == 0:
            d2 = pivot_scale
            m_new = g_row.astype(np.float64, copy=True)
            w_rem = reward - self.prior.mean[arm]
        else:
            # The new off-diagonal row of L is a column of M: L a = K(X, arm).
            a = self._M[:t, arm].copy()
            d2 = pivot_scale - a @ a
            if d2 <= _PIVOT_RTOL * pivot_scale:
                self._append_and_refactor(arm, reward)
                return self
            m_new = g_row - a @ self._M[:t]
            w_rem = reward - self.prior.mean[arm] - a @ self._w[:t]
            self._L[t, :t] = a
        d = np.sqrt(d2)
        m_new /= d
        self._L[t, t] = d
        self._M[t] = m_new
        self._w[t] = w_rem / d
        self._obs_idx[t] = arm
        self._obs_y[t] = reward
        self.t = t + 1
        self.mean += self._w[t] * m_new
        self.var -= m_new * m_new
        np.maximum(self.var, 0.0, out=self.var)
        return self

    def _append_and_refactor(self, arm: int, reward: float) -> None:
        self._obs_idx[self.t] = arm
        self._obs_y[self.t] = reward
        self.t += 1
        self.refactorize()

    def refactorize(self) -> None:
        """Rebuild the factor and derived state from scratch (O(t^2 n))."""
        t = self.t
        idx = self._obs_idx[:t]
        k_obs = self.prior.cov[np.ix_(idx, idx)] + self.noise_var * np.eye(t)
        try:
            chol = np.linalg.cholesky(k_obs)
        except np.linalg.LinAlgError as exc:
            raise IllConditionedPrior(
                f"prior {self.prior.id!r}: observed block not factorizable at t={t}"
            ) from exc
        self._L[:t, :t] = chol
        self._M[:t] = solve_triangular(
            chol, self.prior.cov[idx], lower=True, check_finite=False
        )
        self._w[:t] = solve_triangular(
            chol,
            self._obs_y[:t] - self.prior.mean[idx],
            lower=True,
            check_finite=False,
        )
        self.mean = self.prior.mean + self._M[:t].T @ self._w[:t]
        self.var = np.diag(self.prior.cov) - np.einsum(
            "ij,ij->j", self._M[:t], self._M[:t]
        )
        np.maximum(self.var, 0.0, out=self.var)

    # -- queries -----------------------------------------------------------

    def posterior_mean_var(self) -> tuple[np.ndarray, np.ndarray]:
        """Posterior mean and variance at every arm (copies)."""
        return self.mean.copy(), self.var.copy()

    def sample_posterior(
        self, rng: np.random.Generator, prior_draw: np.ndarray | None = None
    ) -> np.ndarray:
        """One exact joint draw over all arms via pathwise conditioning."""
        if prior_draw is None:
            prior_draw = self.prior.mean + self.prior.chol @ rng.standard_normal(self.n)
        t = self.t
        if t == 0:
            return np.array(prior_draw, dtype=np.float64, copy=True)
        eps = rng.standard_normal(t) * np.sqrt(self.noise_var)
        resid = self._obs_y[:t] - prior_draw[self._obs_idx[:t]] - eps
        u = solve_triangular(
            self._L[:t, :t], resid, lower=True, check_finite=False
        )
        return prior_draw + u @ self._M[:t]

    def predictive_loglik(self, arm: int, reward: float) -> float:
        """Log-density of ``reward`` under the noisy posterior predictive."""
        s2 = self.var[arm] + self.noise_var
        diff = reward - self.mean[arm]
        return float(-0.5 * (np.log(2.0 * np.pi * s2) + diff * diff / s2))


@dataclass
class PriorDrawBuffer:
    """Blocked prior sampling so repeated draws amortize into one GEMM."""

    prior: MaterializedPrior
    rng: np.random.Generator
    block: int = 32
    _draws: np.ndarray = field(default=None, repr=False)  # type: ignore[assignment]
    _pos: int = 0

    def next(self) -> np.ndarray:
        if self._draws is None or self._pos >= self._draws.shape[0]:
            z = self.rng.standard_normal((self.prior.num_arms, self.block))
            self._draws = self.prior.mean[None, :] + (self.prior.chol @ z).T
            self._pos = 0
        draw = self._draws[self._pos]
        self._pos += 1
        return draw
