"""Run-time analysis objects: gaps, surrogate tracking, and rate fits.

The surrogate tracker maintains the linear lower-bound model that the
momentum Frank-Wolfe solver minimizes, together with the contraction
weights and the quadratic error budget that sandwich the objective values.
Everything here is a pure function of quantities the solvers already
produce.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .core import diff_norm_sq, inner, lincomb
from .feasible_sets import FeasibleSet, ZeroDirection


class IncompleteTrace(Exception):
    """The trace lacks rows required by the requested statistic."""


class EmptyWindow(Exception):
    """Too few usable rows remain inside the fit window."""


def fw_gap(grad, x, feasible_set: FeasibleSet) -> float:
    """Duality gap <grad, x - v> with v the oracle output at grad.

    Nonnegative, zero exactly at constrained stationary points, and an
    upper bound on the suboptimality of x for convex objectives. A zero
    gradient yields gap 0.
    """
    if not feasible_set.contains(x):
        raise ValueError("gap is defined for feasible points only")
    try:
        v = feasible_set.lmo(grad)
    except ZeroDirection:
        return 0.0
    return inner(grad, x) - inner(grad, v)


@dataclass(frozen=True)
class SurrogateState:
    """Estimate-sequence bookkeeping at iteration k.

    The running lower-bound model is phi(x) = phi_star + <x - v, theta>;
    `lam` contracts the initial error and `xi` accumulates the quadratic
    penalty paid whenever consecutive oracle points move.
    """

    theta: object
    v: object
    phi_star: float
    lam: float
    xi: float
    k: int

    @classmethod
    def initial(cls, f_x0: float, x0, theta_zero) -> "SurrogateState":
        return cls(theta=theta_zero, v=x0, phi_star=float(f_x0),
                   lam=1.0, xi=0.0, k=0)


def surrogate_step(state: SurrogateState, delta_k: float, f_yk: float,
                   grad_yk, y_k, v_next, smoothness: float) -> SurrogateState:
    """Advance the surrogate model by one solver iteration.

    Applies the closed-form recursions for the model minimum, the
    contraction weight, and the error budget:

      theta'    = (1 - d) theta + d grad
      phi_star' = (1 - d) phi_star + d f(y)
                  + (1 - d) <theta, v' - v> + d <grad, v' - y>
      xi'       = (1 - d) xi + (L d^2 / 2) ||v' - v||^2
      lam'      = (1 - d) lam
    """
    if not 0.0 < delta_k < 1.0:
        raise ValueError("step must lie strictly inside (0, 1)")
    theta_next = lincomb(1.0 - delta_k, state.theta, delta_k, grad_yk)
    phi_next = ((1.0 - delta_k) * state.phi_star + delta_k * f_yk
                + (1.0 - delta_k) * (inner(state.theta, v_next)
                                     - inner(state.theta, state.v))
                + delta_k * (inner(grad_yk, v_next) - inner(grad_yk, y_k)))
    xi_next = ((1.0 - delta_k) * state.xi
               + 0.5 * smoothness * delta_k * delta_k
               * diff_norm_sq(v_next, state.v))
    return SurrogateState(theta=theta_next, v=v_next, phi_star=phi_next,
                          lam=(1.0 - delta_k) * state.lam, xi=xi_next,
                          k=state.k + 1)


def dual_gap_weights(k: int) -> np.ndarray:
    """Averaging weights 2(tau+2) / (k(k+3)) for tau = 0..k-1; they sum to 1."""
    if k < 1:
        raise ValueError("need at least one completed iteration")
    tau = np.arange(k, dtype=np.float64)
    return 2.0 * (tau + 2.0) / (k * (k + 3.0))


def weighted_dual_gap(trace_or_terms, k: int) -> float:
    """Weighted average of the per-iteration lower-bound estimates.

    Each term is f(y_tau) + <grad f(y_tau), v_{tau+1} - y_tau>, the value
    of the model the momentum step minimizes; the accelerated-gradient
    solver records it per iteration. The weighted average converges to
    the optimal value from below at an O(1/k^2) rate.
    """
    terms = getattr(trace_or_terms, "extras", None)
    if terms is not None:
        terms = trace_or_terms.extras.get("dual_bound_term")
        if terms is None:
            raise IncompleteTrace("trace has no dual_bound_term column")
    else:
        terms = np.asarray(trace_or_terms, dtype=np.float64)
    if terms.shape[0] < k:
        raise IncompleteTrace(f"need {k} completed iterations, have {terms.shape[0]}")
    head = terms[:k]
    if not np.all(np.isfinite(head)):
        raise IncompleteTrace("dual bound terms missing inside the window")
    return float(dual_gap_weights(k) @ head)


def agm_momentum_equivalence(v_k, grad_yk, delta_k: float,
                             mu_next: float) -> Tuple[np.ndarray, float]:
    """Closed-form momentum point and its first-order-condition residual.

    The momentum update v - (delta/mu') grad is the unique minimizer of a
    gradient-regularized model; the returned residual measures how well it
    satisfies the stationarity condition grad + (mu'/delta)(v' - v) = 0.
    """
    if mu_next <= 0 or delta_k <= 0:
        raise ValueError("delta and mu must be positive")
    v_k = np.asarray(v_k, dtype=np.float64)
    grad_yk = np.asarray(grad_yk, dtype=np.float64)
    closed = v_k - (delta_k / mu_next) * grad_yk
    residual = float(np.linalg.norm(grad_yk + (mu_next / delta_k) * (closed - v_k)))
    return closed, residual


@dataclass(frozen=True)
class RateReport:
    """Log-log fit of the optimality gap against the iteration counter."""

    slope: float
    intercept: float
    window: Tuple[int, int]
    r_squared: float
    n_excluded: int = 0

    def to_json_dict(self) -> dict:
        return {"slope": self.slope, "intercept": self.intercept,
                "window": [int(self.window[0]), int(self.window[1])],
                "r_squared": self.r_squared}


def default_rate_window(last_k: int) -> Tuple[int, int]:
    """Fit window skipping the transient: [max(100, K/100), K]."""
    return (max(100, last_k // 100), last_k)


def estimate_rate(trace, f_star: float,
                  window: Optional[Tuple[int, int]] = None) -> RateReport:
    """Least-squares slope of log(f(x_k) - f_star) versus log k.

    Rows with gap at or below 1e-14 are excluded (and counted); a
    negative gap means f_star is not a valid lower reference and is
    refused outright. Raises EmptyWindow when fewer than 10 rows remain.
    """
    ks = np.asarray(trace.k, dtype=np.float64)
    gaps = np.asarray(trace.f_value, dtype=np.float64) - f_star
    if window is None:
        window = default_rate_window(int(ks[-1]))
    k_min, k_max = window
    if not k_min < k_max:
        raise ValueError("window must satisfy k_min < k_max")
    in_window = (ks >= k_min) & (ks <= k_max) & (ks >= 1)
    if np.any(gaps[in_window] < 0.0):
        raise ValueError("negative gaps in window; f_star is not a lower bound")
    usable = in_window & (gaps > 1e-14)
    n_excluded = int(np.count_nonzero(in_window) - np.count_nonzero(usable))
    if np.count_nonzero(usable) < 10:
        raise EmptyWindow(f"only {np.count_nonzero(usable)} usable rows in {window}")
    log_k = np.log(ks[usable])
    log_gap = np.log(gaps[usable])
    design = np.column_stack([log_k, np.ones_like(log_k)])
    coef, _, _, _ = np.linalg.lstsq(design, log_gap, rcond=None)
    fitted = design @ coef
    ss_res = float(np.sum((log_gap - fitted) ** 2))
    ss_tot = float(np.sum((log_gap - log_gap.mean()) ** 2))
    r_squared = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return RateReport(slope=float(coef[0]), intercept=float(coef[1]),
                      window=(int(k_min), int(k_max)), r_squared=r_squared,
                      n_excluded=n_excluded)


def zigzag_dispersion(trace, window: Optional[Tuple[int, int]] = None) -> float:
    """Standard deviation of successive objective differences.

    Purely informational: a rough dispersion number for the oscillation
    of f(x_k) across a window of iterations.
    """
    ks = np.asarray(trace.k)
    f = np.asarray(trace.f_value)
    if window is not None:
        m = (ks >= window[0]) & (ks <= window[1])
        f = f[m]
    if f.size < 3:
        return 0.0
    return float(np.std(np.diff(f)))
