"""Constraint sets: linear minimization oracles and Euclidean projections.

Each oracle minimizes <direction, x> over its ball in closed form. A zero
direction has no informative minimizer, so the oracles raise ZeroDirection
and the solver layer decides what to reuse.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.special import logsumexp

from .core import FactoredMatrix, SparseMatrix, ZeroOperator, as_vector, top_singular_pair

# Ratio of largest to smallest nonzero |theta_i| beyond which the p-norm
# oracle switches to log-domain arithmetic to dodge overflow/underflow.
_LP_LOG_DOMAIN_RATIO = 1e8

# Absolute slack on membership tests; covers rounding accumulated over
# ~1e4 convex combinations.
_CONTAINS_SLACK = 1e-9


class ZeroDirection(Exception):
    """The oracle was called with an all-zero direction."""


def lmo_l2(theta, radius: float) -> np.ndarray:
    """Extreme point of the l2 ball: the antipode of theta, scaled to radius."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    theta = as_vector(theta)
    norm = np.linalg.norm(theta)
    if norm == 0.0:
        raise ZeroDirection("l2 oracle needs a nonzero direction")
    return (-radius / norm) * theta


def lmo_l1(theta, radius: float) -> np.ndarray:
    """Extreme point of the l1 ball: one signed, scaled basis vector.

    Picks the coordinate with the largest |theta_i|, breaking ties toward
    the smallest index so runs are reproducible.
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    theta = as_vector(theta)
    if not np.any(theta):
        raise ZeroDirection("l1 oracle needs a nonzero direction")
    i = int(np.argmax(np.abs(theta)))  # argmax returns the first maximizer
    out = np.zeros_like(theta)
    out[i] = -np.sign(theta[i]) * radius
    return out


def lmo_lp(theta, radius: float, p: float) -> np.ndarray:
    """Extreme point of the lp ball for p in (1, inf).

    With q the conjugate exponent, the minimizer has entries
    -sign(theta_i) |theta_i|^(q-1) / ||theta||_q^(q-1) * radius; zero
    entries of theta stay zero. Widely spread magnitudes are handled in
    the log domain.
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    if not 1.0 < p < np.inf:
        raise ValueError("p must lie in (1, inf)")
    theta = as_vector(theta)
    nz = theta != 0.0
    if not np.any(nz):
        raise ZeroDirection("lp oracle needs a nonzero direction")
    q = p / (p - 1.0)
    out = np.zeros_like(theta)
    mags = np.abs(theta[nz])
    if mags.max() / mags.min() > _LP_LOG_DOMAIN_RATIO:
        log_mags = np.log(mags)
        log_norm_q = logsumexp(q * log_mags) / q
        out[nz] = -np.sign(theta[nz]) * radius * np.exp(
            (q - 1.0) * (log_mags - log_norm_q))
    else:
        norm_q = np.sum(mags ** q) ** (1.0 / q)
        out[nz] = -np.sign(theta[nz]) * radius * (mags / norm_q) ** (q - 1.0)
    return out


def lmo_nuclear(grad: SparseMatrix, radius: float, tol: float = 1e-10,
                seed: int = 0):
    """Extreme point of the nuclear-norm ball in factored form.

    Returns (scale, p, q) representing the rank-one matrix scale * p q^T
    with scale = -radius and (p, q) the top singular pair of the gradient;
    the matrix is never densified.
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    try:
        _, p, q = top_singular_pair(grad, tol=tol, seed=seed)
    except ZeroOperator as exc:
        raise ZeroDirection("nuclear oracle needs a nonzero gradient") from exc
    return -radius, p, q


def project_l2(z, radius: float) -> np.ndarray:
    """Closest point of the l2 ball: rescale radially if outside."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    z = as_vector(z)
    norm = np.linalg.norm(z)
    if norm <= radius:
        return z.copy()
    return (radius / norm) * z


def project_l1(z, radius: float) -> np.ndarray:
    """Euclidean projection onto the l1 ball by sort and soft-threshold.

    Sorts |z| once, locates the largest threshold tau for which the
    shrunk vector still sums to the radius, and soft-thresholds. Exact
    for interior points (returned unchanged).
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    z = as_vector(z)
    mags = np.abs(z)
    if mags.sum() <= radius:
        return z.copy()
    u = np.sort(mags)[::-1]
    cssv = np.cumsum(u)
    j = np.arange(1, u.size + 1)
    rho = np.max(np.nonzero(u * j > cssv - radius)[0]) + 1
    tau = (cssv[rho - 1] - radius) / rho
    return np.sign(z) * np.maximum(mags - tau, 0.0)


@dataclass(frozen=True)
class FeasibleSet:
    """A convex compact set as seen by the solvers.

    `lmo` maps a direction to an extreme point, `contains` tests
    membership with a small absolute slack, and `project` is present only
    where a cheap Euclidean projection exists. For norm balls the
    diameter is twice the radius.
    """

    lmo: Callable
    contains: Callable
    diameter: float
    descriptor: dict
    project: Optional[Callable] = None


def l2_ball(radius: float) -> FeasibleSet:
    if radius <= 0:
        raise ValueError("radius must be positive")
    return FeasibleSet(
        lmo=lambda theta: lmo_l2(theta, radius),
        contains=lambda x: np.linalg.norm(x) <= radius + _CONTAINS_SLACK,
        diameter=2.0 * radius,
        descriptor={"kind": "l2_ball", "radius": radius},
        project=lambda z: project_l2(z, radius))


def l1_ball(radius: float) -> FeasibleSet:
    if radius <= 0:
        raise ValueError("radius must be positive")
    return FeasibleSet(
        lmo=lambda theta: lmo_l1(theta, radius),
        contains=lambda x: np.abs(x).sum() <= radius + _CONTAINS_SLACK,
        diameter=2.0 * radius,
        descriptor={"kind": "l1_ball", "radius": radius},
        project=lambda z: project_l1(z, radius))


def lp_ball(radius: float, p: float) -> FeasibleSet:
    if radius <= 0:
        raise ValueError("radius must be positive")
    if not 1.0 < p < np.inf:
        raise ValueError("p must lie in (1, inf)")
    def norm_p(x):
        x = np.abs(np.asarray(x))
        if not x.any():
            return 0.0
        m = x.max()
        return m * np.sum((x / m) ** p) ** (1.0 / p)
    return FeasibleSet(
        lmo=lambda theta: lmo_lp(theta, radius, p),
        contains=lambda x: norm_p(x) <= radius + _CONTAINS_SLACK,
        diameter=2.0 * radius,
        descriptor={"kind": "lp_ball", "radius": radius, "p": p})


def nuclear_ball(radius: float, shape, mask_rows, mask_cols,
                 tol: float = 1e-10, seed: int = 0) -> FeasibleSet:
    """Nuclear-norm ball over matrices observed on a fixed mask.

    The oracle output and all iterates are `FactoredMatrix` values whose
    entries on the mask stay cached; membership is certified through the
    sum of |atom weights|, an upper bound on the nuclear norm that convex
    combinations preserve.
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    m, n = shape

    def oracle(grad: SparseMatrix) -> FactoredMatrix:
        scale, p, q = lmo_nuclear(grad, radius, tol=tol, seed=seed)
        return FactoredMatrix.rank_one(scale, p, q, mask_rows, mask_cols)

    def member(x) -> bool:
        if isinstance(x, FactoredMatrix):
            return x.weight_l1() <= radius + _CONTAINS_SLACK
        svals = np.linalg.svd(np.asarray(x), compute_uv=False)
        return float(svals.sum()) <= radius + _CONTAINS_SLACK

    return FeasibleSet(
        lmo=oracle,
        contains=member,
        diameter=2.0 * radius,
        descriptor={"kind": "nuclear_ball", "radius": radius,
                    "shape": [int(m), int(n)]})
