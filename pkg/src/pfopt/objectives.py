"""Smooth convex objectives with exact gradients and smoothness constants."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.special import expit

from .core import (DimensionMismatch, FactoredMatrix, SparseMatrix, as_vector,
                   power_iteration, top_singular_pair)


@dataclass(frozen=True)
class Objective:
    """A smooth convex function f with its gradient and curvature data.

    `smoothness` is a Lipschitz constant of the gradient (possibly an
    upper bound). `strong_convexity` is set only when it is exact.
    """

    eval: Callable
    grad: Callable
    smoothness: float
    strong_convexity: Optional[float] = None
    descriptor: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.smoothness <= 0:
            raise ValueError("smoothness constant must be positive")
        if self.strong_convexity is not None:
            if not 0 < self.strong_convexity <= self.smoothness:
                raise ValueError("need 0 < strong convexity <= smoothness")


@dataclass(frozen=True)
class LogisticProblem:
    """Binary classification data: sparse feature rows and +/-1 labels."""

    features: SparseMatrix
    labels: np.ndarray

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.float64)
        object.__setattr__(self, "labels", labels)
        if labels.ndim != 1 or labels.size != self.features.n_rows:
            raise DimensionMismatch("one label per feature row required")
        if labels.size < 1:
            raise ValueError("need at least one datum")
        if not np.all(np.isin(labels, (-1.0, 1.0))):
            raise ValueError("labels must be -1 or +1")


@dataclass(frozen=True)
class MatCompProblem:
    """Partially observed matrix; the sparse entries are the observations."""

    observed: SparseMatrix

    def __post_init__(self):
        if self.observed.nnz == 0:
            raise ValueError("need at least one observed entry")


def quadratic_objective(center, scale: float = 1.0) -> Objective:
    """f(x) = scale * ||x - center||^2. Exact curvature on both sides."""
    if scale <= 0:
        raise ValueError("scale must be positive")
    center = as_vector(center)

    def value(x):
        d = as_vector(x, center.size) - center
        return float(scale * (d @ d))

    def gradient(x):
        return 2.0 * scale * (as_vector(x, center.size) - center)

    return Objective(value, gradient, 2.0 * scale, 2.0 * scale,
                     descriptor={"kind": "quadratic", "dim": center.size,
                                 "scale": scale})


def diagonal_quadratic_objective(center, diag) -> Objective:
    """f(x) = sum_i diag_i (x_i - center_i)^2 with per-axis curvatures.

    The anisotropic counterpart of `quadratic_objective`; the unique
    unconstrained minimizer is `center`, which makes it the workhorse
    fixture when an analytic optimum is required.
    """
    center = as_vector(center)
    diag = as_vector(diag, center.size)
    if np.any(diag <= 0):
        raise ValueError("diagonal curvatures must be positive")

    def value(x):
        d = as_vector(x, center.size) - center
        return float(diag @ (d * d))

    def gradient(x):
        return 2.0 * diag * (as_vector(x, center.size) - center)

    return Objective(value, gradient, 2.0 * float(diag.max()),
                     2.0 * float(diag.min()),
                     descriptor={"kind": "diagonal_quadratic",
                                 "dim": center.size,
                                 "diag_max": float(diag.max()),
                                 "diag_min": float(diag.min())})


def logistic_objective(problem: LogisticProblem, smoothness_seed: int = 0,
                       smoothness_tol: float = 1e-8) -> Objective:
    """Mean logistic loss over (feature, label) pairs.

    f(x) = (1/n) sum_i log(1 + exp(-b_i <a_i, x>)), evaluated through a
    softplus that never overflows, with the exact gradient. The smoothness
    constant is the spectral upper bound lambda_max(A^T A) / (4n), found
    by power iteration on the Gram operator.
    """
    features = problem.features
    labels = problem.labels
    n = features.n_rows

    lam_max, _, _ = power_iteration(features.gram_matvec, features.n_cols,
                                    tol=smoothness_tol, seed=smoothness_seed)
    smoothness = lam_max / (4.0 * n)

    def margins(x):
        return labels * features.matvec(as_vector(x, features.n_cols))

    def value(x):
        z = margins(x)
        # softplus(-z) = log(1 + exp(-z)), stable for |z| >> 700
        return float(np.mean(np.log1p(np.exp(-np.abs(z))) + np.maximum(-z, 0.0)))

    def gradient(x):
        z = margins(x)
        return -features.rmatvec(labels * expit(-z)) / n

    return Objective(value, gradient, smoothness,
                     descriptor={"kind": "logistic", "n": n,
                                 "dim": features.n_cols})


def matcomp_objective(problem: MatCompProblem) -> Objective:
    """Half squared error on the observed entries of a matrix.

    Points are `FactoredMatrix` iterates carrying cached values on the
    observation mask; the gradient is sparse with support exactly equal to
    the mask. The smoothness constant is 1.
    """
    obs = problem.observed

    def _mask_values(x):
        if not isinstance(x, FactoredMatrix):
            raise DimensionMismatch("matrix objectives take FactoredMatrix points")
        if x.shape != obs.shape:
            raise DimensionMismatch(
                f"point shape {x.shape} != data shape {obs.shape}")
        return x.mask_values

    def value(x):
        resid = _mask_values(x) - obs.values
        return float(0.5 * (resid @ resid))

    def gradient(x):
        return obs.with_values(_mask_values(x) - obs.values)

    return Objective(value, gradient, 1.0,
                     descriptor={"kind": "matcomp", "shape": list(obs.shape),
                                 "observed": int(obs.nnz)})


def matcomp_initial_point(problem: MatCompProblem, radius: float,
                          tol: float = 1e-10, seed: int = 0) -> FactoredMatrix:
    """Rank-one start on the constraint boundary.

    Scales the top singular pair of the observed matrix to the given
    nuclear-norm radius, giving a rank-one feasible iterate aligned with
    the data.
    """
    obs = problem.observed
    sigma, p, q = top_singular_pair(obs, tol=tol, seed=seed)
    return FactoredMatrix.rank_one(radius, p, q, obs.rows, obs.cols)
