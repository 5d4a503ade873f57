"""Covariance kernel families and Gram-matrix construction over finite arm sets.

Six families are supported: RBF, rational quadratic, Matern 3/2 and 5/2,
periodic and linear.  Conventions used throughout the package:

* the RBF kernel is the standard ``exp(-r^2 / (2 l^2))``, the alpha -> inf
  limit of the rational quadratic ``(1 + r^2 / (2 alpha l^2))^-alpha``;
* the periodic kernel sums ``sin^2(pi (x_i - y_i) / rho)`` per dimension and
  divides the sum by the lengthscale ``l`` (not ``l^2``);
* the linear kernel is ``v * <x, y>``, so on a domain reaching ``x = 20`` a
  variance of ``0.05^2`` keeps every value at or below 1.

All stationary families evaluate to exactly 1 at zero distance, so the prior
variance at every arm is 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

STATIONARY_KINDS = ("rbf", "rq", "matern32", "matern52", "periodic")
KERNEL_KINDS = STATIONARY_KINDS + ("linear",)

_SQRT3 = np.sqrt(3.0)
_SQRT5 = np.sqrt(5.0)


@dataclass(frozen=True)
class KernelSpec:
    """One covariance family with fixed hyperparameters.

    ``active_dims`` holds 1-based dimension indices; an empty tuple means the
    kernel acts on all input dimensions.
    """

    kind: str
    lengthscale: float = 1.0
    alpha: float = 0.5  # rq only
    period: float = 5.0  # periodic only
    variance: float = 1.0  # linear only
    active_dims: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        if self.kind not in KERNEL_KINDS:
            raise ValueError(
                f"unknown kernel kind {self.kind!r}; expected one of {KERNEL_KINDS}"
            )
        for name in ("lengthscale", "alpha", "period", "variance"):
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0:
                raise ValueError(f"kernel parameter {name} must be > 0, got {value}")
        dims = tuple(int(d) for d in self.active_dims)
        if len(set(dims)) != len(dims):
            raise ValueError(f"active_dims must be distinct, got {dims}")
        if any(d < 1 for d in dims):
            raise ValueError(f"active_dims are 1-based, got {dims}")
        object.__setattr__(self, "active_dims", dims)

    @property
    def stationary(self) -> bool:
        return self.kind != "linear"


def _check_dims(spec: KernelSpec, d: int) -> np.ndarray:
    """Return the 0-based column indices the kernel acts on."""
    if spec.active_dims:
        if max(spec.active_dims) > d:
            raise ValueError(
                f"active_dims {spec.active_dims} exceed input dimension {d}"
            )
        return np.asarray(spec.active_dims, dtype=np.intp) - 1
    return np.arange(d, dtype=np.intp)


def eval_kernel(spec: KernelSpec, x, x_other) -> float:
    """Evaluate ``k(x, x_other)`` for a single pair of points."""
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    y = np.atleast_1d(np.asarray(x_other, dtype=np.float64))
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError(f"point dimensions differ: {x.shape} vs {y.shape}")
    cols = _check_dims(spec, x.size)
    xa, ya = x[cols], y[cols]
    # |diff| keeps evaluation bitwise symmetric in (x, y).
    diff = np.abs(xa - ya)
    ell = spec.lengthscale
    if spec.kind == "rbf":
        return float(np.exp(-np.dot(diff, diff) / (2.0 * ell**2)))
    if spec.kind == "rq":
        r2 = np.dot(diff, diff)
        return float((1.0 + r2 / (2.0 * spec.alpha * ell**2)) ** (-spec.alpha))
    if spec.kind == "matern32":
        z = _SQRT3 * np.sqrt(np.dot(diff, diff)) / ell
        return float((1.0 + z) * np.exp(-z))
    if spec.kind == "matern52":
        r2 = np.dot(diff, diff)
        z = _SQRT5 * np.sqrt(r2) / ell
        return float((1.0 + z + 5.0 * r2 / (3.0 * ell**2)) * np.exp(-z))
    if spec.kind == "periodic":
        s = np.sin(np.pi * diff / spec.period)
        return float(np.exp(-0.5 * np.dot(s, s) / ell))
    # linear
    return float(spec.variance * np.dot(xa, ya))


def gram_matrix(spec: KernelSpec, arms: np.ndarray) -> np.ndarray:
    """Pairwise kernel matrix over an ``(n, d)`` arm set.

    The result is exactly symmetric; stationary families get an exact unit
    diagonal.
    """
    arms = np.asarray(arms, dtype=np.float64)
    if arms.ndim == 1:
        arms = arms[:, None]
    if arms.ndim != 2 or arms.shape[0] < 1:
        raise ValueError(f"arms must be an (n, d) array, got shape {arms.shape}")
    cols = _check_dims(spec, arms.shape[1])
    a = arms[:, cols]
    ell = spec.lengthscale

    if spec.kind == "linear":
        k = spec.variance * (a @ a.T)
        return 0.5 * (k + k.T)

    if spec.kind == "periodic":
        diff = a[:, None, :] - a[None, :, :]
        s2 = np.square(np.sin(np.pi * diff / spec.period)).sum(axis=2)
        k = np.exp(-0.5 * s2 / ell)
    else:
        sq = np.einsum("ij,ij->i", a, a)
        r2 = sq[:, None] + sq[None, :] - 2.0 * (a @ a.T)
        np.maximum(r2, 0.0, out=r2)
        if spec.kind == "rbf":
            k = np.exp(-r2 / (2.0 * ell**2))
        elif spec.kind == "rq":
            k = (1.0 + r2 / (2.0 * spec.alpha * ell**2)) ** (-spec.alpha)
        elif spec.kind == "matern32":
            z = _SQRT3 * np.sqrt(r2) / ell
            k = (1.0 + z) * np.exp(-z)
        else:  # matern52
            z = _SQRT5 * np.sqrt(r2) / ell
            k = (1.0 + z + 5.0 * r2 / (3.0 * ell**2)) * np.exp(-z)

    k = 0.5 * (k + k.T)
    np.fill_diagonal(k, 1.0)
    return k


def is_psd_up_to_jitter(gram: np.ndarray, tol_scale: float = 1e-8) -> bool:
    """Check the smallest eigenvalue is above ``-tol_scale * max(diag)``."""
    gram = np.asarray(gram, dtype=np.float64)
    max_diag = float(np.max(np.diag(gram)))
    smallest = float(np.linalg.eigvalsh(gram)[0])
    return smallest >= -tol_scale * max(max_diag, 1.0)
