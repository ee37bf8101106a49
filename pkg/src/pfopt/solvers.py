"""Projection-free and projected first-order solvers with trace recording.

Four algorithms share the conventions here:

* `run_fw`   - conditional gradient: linearize at the iterate, move toward
               the oracle point with an open-loop step.
* `run_afw`  - momentum conditional gradient: the oracle direction is a
               decaying average of past gradients taken at auxiliary
               points, so consecutive oracle outputs stabilize.
* `run_agm`  - accelerated gradient (optionally projected) with the
               vanishing-regularization momentum sequence.
* `run_agm_sc` - accelerated gradient for strongly convex objectives with
               the constant step built from the condition number.
* `run_projected_gd` - projected gradient descent with step 1/L.

All solvers start the momentum sequence at the initial point, never use
line search or curvature information in the open-loop schedules, and
record one trace row per iterate, k = 0..K inclusive. Runs are
deterministic given their inputs; wall-clock columns are the only
nondeterministic field.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .core import combine, diff_norm_sq, gnorm, inner, lincomb, zeros_like_grad
from .diagnostics import SurrogateState, fw_gap, surrogate_step
from .feasible_sets import FeasibleSet, ZeroDirection
from .objectives import Objective


class InfeasibleStart(Exception):
    """The initial point lies outside the feasible set."""


class InfeasibleIterate(Exception):
    """An iterate left the feasible set; indicates an internal bug."""


class MissingProjection(Exception):
    """A projected method was given a set without a projection."""


class MissingStrongConvexity(Exception):
    """The strongly convex solver needs an exact strong convexity constant."""


@dataclass(frozen=True)
class Schedule:
    """Open-loop step-size rule delta_k, indexed from k = 0."""

    name: str
    delta: Callable[[int], float]
    mu0: Optional[float] = None


def fw_classic() -> Schedule:
    """delta_k = 2 / (k + 2); the first step replaces the iterate entirely."""
    return Schedule("fw_classic", lambda k: 2.0 / (k + 2.0))


def afw_shifted() -> Schedule:
    """delta_k = 2 / (k + 3); strictly below one so averages never reset."""
    return Schedule("afw_shifted", lambda k: 2.0 / (k + 3.0))


def custom_schedule(delta: Callable[[int], float], name: str = "custom",
                    mu0: Optional[float] = None) -> Schedule:
    return Schedule(name, delta, mu0)


@dataclass(frozen=True)
class StoppingRule:
    """Iteration cap plus optional gap and wall-clock cutoffs."""

    max_iters: int
    gap_tol: Optional[float] = None
    time_budget_s: Optional[float] = None

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")


@dataclass
class SolverState:
    """Snapshot of the variables after an iteration."""

    k: int
    x: object
    y: object = None
    v: object = None
    theta: object = None
    mu: Optional[float] = None


@dataclass
class SolverTrace:
    """Per-iteration record of a run.

    Columns are aligned with `k`; `extras` holds optional diagnostics
    columns (surrogate values, gradient norms, momentum distances). The
    final state is attached for inspection and is not serialized.
    """

    k: np.ndarray
    f_value: np.ndarray
    fw_gap: np.ndarray
    step_delta: np.ndarray
    wall_time_ns: np.ndarray
    extras: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)
    final_state: Optional[SolverState] = None

    def gap_column(self) -> np.ndarray:
        """The column used for gap-based stopping and comparisons."""
        return self.fw_gap


class _TraceBuilder:
    def __init__(self, extra_names):
        self.t0 = time.perf_counter_ns()
        self.k = []
        self.f_value = []
        self.fw_gap = []
        self.step_delta = []
        self.wall_time_ns = []
        self.extras = {name: [] for name in extra_names}

    def row(self, k, f_value, gap, delta, **extras):
        self.k.append(k)
        self.f_value.append(f_value)
        self.fw_gap.append(gap)
        self.step_delta.append(delta)
        self.wall_time_ns.append(time.perf_counter_ns() - self.t0)
        for name in self.extras:
            self.extras[name].append(extras.get(name, np.nan))

    def elapsed_s(self):
        return (time.perf_counter_ns() - self.t0) / 1e9

    def build(self, metadata, final_state):
        return SolverTrace(
            k=np.asarray(self.k, dtype=np.int64),
            f_value=np.asarray(self.f_value, dtype=np.float64),
            fw_gap=np.asarray(self.fw_gap, dtype=np.float64),
            step_delta=np.asarray(self.step_delta, dtype=np.float64),
            wall_time_ns=np.asarray(self.wall_time_ns, dtype=np.int64),
            extras={n: np.asarray(col, dtype=np.float64)
                    for n, col in self.extras.items()},
            metadata=metadata,
            final_state=final_state)


def _require_feasible_start(feasible_set, x0):
    if not feasible_set.contains(x0):
        raise InfeasibleStart("initial point is outside the feasible set")


def _check_iterate(feasible_set, point, what, k):
    if not feasible_set.contains(point):
        raise InfeasibleIterate(f"{what} left the feasible set at iteration {k}")


def _check_delta(delta, k, strict_upper=False):
    if not 0.0 < delta <= 1.0 or (strict_upper and delta >= 1.0):
        rng = "(0, 1)" if strict_upper else "(0, 1]"
        raise ValueError(f"schedule produced delta_{k}={delta!r} outside {rng}")


def _should_stop(stop: StoppingRule, k, gap, builder):
    if k >= stop.max_iters:
        return "max_iters"
    if stop.gap_tol is not None and np.isfinite(gap) and gap <= stop.gap_tol:
        return "gap_tol"
    if stop.time_budget_s is not None and builder.elapsed_s() > stop.time_budget_s:
        return "time_budget"
    return None


def _metadata(algorithm, schedule_name, obj, feasible_set, seed, reason, k):
    return {"algorithm": algorithm,
            "schedule": schedule_name,
            "problem": dict(obj.descriptor),
            "set": dict(feasible_set.descriptor) if feasible_set is not None else None,
            "seed": seed,
            "stop_reason": reason,
            "iterations": int(k)}


def run_fw(obj: Objective, feasible_set: FeasibleSet, x0,
           schedule: Optional[Schedule] = None,
           stop: StoppingRule = StoppingRule(1000),
           seed: Optional[int] = None,
           on_iterate: Optional[Callable[[SolverState], None]] = None) -> SolverTrace:
    """Conditional gradient with an open-loop step schedule.

    Each iteration linearizes the objective at the current iterate, asks
    the oracle for the minimizer of that linear model over the set, and
    moves by the convex combination x <- (1 - delta) x + delta v. When the
    gradient vanishes the previous oracle point is reused, which leaves
    the iterate fixed. Every iterate stays feasible by construction and
    this is verified each iteration.
    """
    schedule = schedule or fw_classic()
    _require_feasible_start(feasible_set, x0)
    x = x0 if not isinstance(x0, np.ndarray) else x0.astype(np.float64, copy=True)
    v = x
    builder = _TraceBuilder([])
    k = 0
    while True:
        grad = obj.grad(x)
        delta = schedule.delta(k)
        _check_delta(delta, k)
        try:
            v_cand = feasible_set.lmo(grad)
            gap = inner(grad, x) - inner(grad, v_cand)
        except ZeroDirection:
            v_cand = None
            gap = 0.0
        builder.row(k, obj.eval(x), gap, delta)
        reason = _should_stop(stop, k, gap, builder)
        if reason:
            break
        if v_cand is not None:
            v = v_cand
        x = combine(x, v, delta)
        k += 1
        _check_iterate(feasible_set, x, "x", k)
        _check_iterate(feasible_set, v, "v", k)
        if on_iterate is not None:
            on_iterate(SolverState(k=k, x=x, v=v))
    final = SolverState(k=k, x=x, v=v)
    return builder.build(_metadata("fw", schedule.name, obj, feasible_set,
                                   seed, reason, k), final)


def run_afw(obj: Objective, feasible_set: FeasibleSet, x0,
            schedule: Optional[Schedule] = None,
            stop: StoppingRule = StoppingRule(1000),
            diagnostics_on: bool = False,
            seed: Optional[int] = None,
            on_iterate: Optional[Callable[[SolverState], None]] = None) -> SolverTrace:
    """Momentum conditional gradient.

    The oracle direction is a running average of gradients evaluated at
    auxiliary points y_k between the iterate and the previous oracle
    output:

        y_k     = (1 - delta_k) x_k + delta_k v_k
        theta'  = (1 - delta_k) theta + delta_k grad f(y_k)
        v'      = oracle(theta')
        x'      = (1 - delta_k) x_k + delta_k v'

    A zero averaged direction reuses the previous oracle point; if that
    happens on the very first iteration the start is stationary and the
    run stops with a "stationary" flag. With `diagnostics_on`, each row
    carries the surrogate model minimum, the contraction weight, and the
    quadratic error budget, plus the smallest |theta_i| entry for
    regularity reporting on vector problems.
    """
    schedule = schedule or afw_shifted()
    _require_feasible_start(feasible_set, x0)
    x = x0 if not isinstance(x0, np.ndarray) else x0.astype(np.float64, copy=True)
    v = x
    theta = None  # created on first gradient so matrix problems share patterns
    diag_state = None
    extra_names = ["phi_star", "xi", "lambda", "theta_min_abs"] if diagnostics_on else []
    builder = _TraceBuilder(extra_names)
    k = 0
    pending = None
    while True:
        delta = schedule.delta(k)
        _check_delta(delta, k, strict_upper=True)
        y = combine(x, v, delta)
        _check_iterate(feasible_set, y, "y", k)
        grad = obj.grad(y)
        if theta is None:
            theta = zeros_like_grad(grad)
            if diagnostics_on:
                diag_state = SurrogateState.initial(obj.eval(x), x, theta)
        theta_next = lincomb(1.0 - delta, theta, delta, grad)
        if gnorm(theta_next) == 0.0:
            v_next = v
            if k == 0:
                pending = "stationary"
        else:
            v_next = feasible_set.lmo(theta_next)
        try:
            gap_lmo = feasible_set.lmo(grad)
            gap = inner(grad, y) - inner(grad, gap_lmo)
        except ZeroDirection:
            gap = 0.0
        extras = {}
        if diagnostics_on:
            extras = {"phi_star": diag_state.phi_star, "xi": diag_state.xi,
                      "lambda": diag_state.lam}
            if isinstance(theta, np.ndarray):
                extras["theta_min_abs"] = float(np.min(np.abs(theta)))
        builder.row(k, obj.eval(x), gap, delta, **extras)
        reason = pending or _should_stop(stop, k, gap, builder)
        if reason and reason != "stationary":
            break
        if diagnostics_on:
            diag_state = surrogate_step(diag_state, delta, obj.eval(y), grad,
                                        y, v_next, obj.smoothness)
        x = combine(x, v_next, delta)
        theta, v = theta_next, v_next
        k += 1
        _check_iterate(feasible_set, x, "x", k)
        _check_iterate(feasible_set, v, "v", k)
        if on_iterate is not None:
            on_iterate(SolverState(k=k, x=x, y=y, v=v, theta=theta))
        if reason:  # stationary start: record the (unchanged) final iterate
            break
    # final row for the last iterate
    if k > builder.k[-1]:
        delta = schedule.delta(k)
        y = combine(x, v, delta)
        grad = obj.grad(y)
        try:
            gap = inner(grad, y) - inner(grad, feasible_set.lmo(grad))
        except ZeroDirection:
            gap = 0.0
        extras = {}
        if diagnostics_on:
            extras = {"phi_star": diag_state.phi_star, "xi": diag_state.xi,
                      "lambda": diag_state.lam}
            if isinstance(theta, np.ndarray):
                extras["theta_min_abs"] = float(np.min(np.abs(theta)))
        builder.row(k, obj.eval(x), gap, delta, **extras)
    final = SolverState(k=k, x=x, v=v, theta=theta)
    return builder.build(_metadata("afw", schedule.name, obj, feasible_set,
                                   seed, reason, k), final)


def run_agm(obj: Objective, x0, stop: StoppingRule = StoppingRule(1000),
            feasible_set: Optional[FeasibleSet] = None,
            x_star=None,
            record_dual_terms: bool = True,
            seed: Optional[int] = None,
            on_iterate: Optional[Callable[[SolverState], None]] = None) -> SolverTrace:
    """Accelerated gradient method with vanishing-regularization momentum.

    Uses delta_k = 2 / (k + 3) and the coupling mu_{k+1} = (1 - delta_k)
    mu_k started at twice the smoothness constant, so the momentum point
    minimizes a gradient model with an O(1/k) regularizer:

        y_k  = delta_k v_k + (1 - delta_k) x_k
        x'   = y_k - grad f(y_k) / L
        v'   = v_k - (delta_k / mu_{k+1}) grad f(y_k)

    When a feasible set with a projection is supplied, both the gradient
    step and the momentum step are projected, keeping every sequence
    feasible. The trace records ||grad f(y_k)||^2, the per-iteration
    lower-bound estimate (unconstrained runs), and the distance of the
    momentum point to the optimum when it is known.
    """
    if feasible_set is not None:
        if feasible_set.project is None:
            raise MissingProjection("constrained accelerated runs need a projection")
        _require_feasible_start(feasible_set, x0)
    smoothness = obj.smoothness
    x = np.asarray(x0, dtype=np.float64).copy()
    v = x.copy()
    mu = 2.0 * smoothness
    extra_names = ["grad_y_norm_sq", "mu"]
    unconstrained = feasible_set is None
    if record_dual_terms and unconstrained:
        extra_names.append("dual_bound_term")
    if x_star is not None:
        x_star = np.asarray(x_star, dtype=np.float64)
        extra_names.append("dist_v_xstar")
    builder = _TraceBuilder(extra_names)
    k = 0
    while True:
        delta = 2.0 / (k + 3.0)
        y = delta * v + (1.0 - delta) * x
        grad = obj.grad(y)
        gn2 = float(grad @ grad)
        extras = {"grad_y_norm_sq": gn2, "mu": mu}
        if x_star is not None:
            extras["dist_v_xstar"] = float(np.linalg.norm(v - x_star))
        row_k = k
        builder.row(k, obj.eval(x), np.nan, delta, **extras)
        reason = _should_stop(stop, k, gn2, builder)
        if reason:
            break
        mu_next = (1.0 - delta) * mu
        x = y - grad / smoothness
        v = v - (delta / mu_next) * grad
        if feasible_set is not None:
            x = feasible_set.project(x)
            v = feasible_set.project(v)
        if record_dual_terms and unconstrained:
            builder.extras["dual_bound_term"][row_k] = (
                obj.eval(y) + float(grad @ (v - y)))
        mu = mu_next
        k += 1
        if on_iterate is not None:
            on_iterate(SolverState(k=k, x=x, y=y, v=v, mu=mu))
    if record_dual_terms and unconstrained:
        builder.extras["dual_bound_term"][-1] = np.nan
    final = SolverState(k=k, x=x, v=v, mu=mu)
    return builder.build(_metadata("agm", "agm_thm1", obj, feasible_set,
                                   seed, reason, k), final)


def run_agm_sc(obj: Objective, x0, stop: StoppingRule = StoppingRule(1000),
               seed: Optional[int] = None,
               on_iterate: Optional[Callable[[SolverState], None]] = None) -> SolverTrace:
    """Accelerated gradient for strongly convex objectives.

    With kappa = L / mu and the constant step delta = 1 / sqrt(kappa):

        y_k = (x_k + delta v_k) / (1 + delta)
        x'  = y_k - grad f(y_k) / L
        z'  = y_k - grad f(y_k) / mu
        v'  = (1 - delta) v_k + delta z'

    The momentum point is formed explicitly through z', the minimizer of
    the strong-convexity lower bound at y_k, so the decomposition of the
    momentum update holds exactly in floating point.
    """
    if obj.strong_convexity is None or obj.strong_convexity <= 0:
        raise MissingStrongConvexity("objective lacks a strong convexity constant")
    smoothness = obj.smoothness
    sc = obj.strong_convexity
    delta = 1.0 / np.sqrt(smoothness / sc)
    x = np.asarray(x0, dtype=np.float64).copy()
    v = x.copy()
    builder = _TraceBuilder(["grad_y_norm_sq"])
    k = 0
    while True:
        y = (x + delta * v) / (1.0 + delta)
        grad = obj.grad(y)
        gn2 = float(grad @ grad)
        builder.row(k, obj.eval(x), np.nan, delta, grad_y_norm_sq=gn2)
        reason = _should_stop(stop, k, gn2, builder)
        if reason:
            break
        x = y - grad / smoothness
        z = y - grad / sc
        v = (1.0 - delta) * v + delta * z
        k += 1
        if on_iterate is not None:
            on_iterate(SolverState(k=k, x=x, y=y, v=v))
    final = SolverState(k=k, x=x, v=v)
    return builder.build(_metadata("agm_sc", "inverse_sqrt_kappa", obj, None,
                                   seed, reason, k), final)


def run_projected_gd(obj: Objective, feasible_set: FeasibleSet, x0,
                     stop: StoppingRule = StoppingRule(1000),
                     seed: Optional[int] = None,
                     on_iterate: Optional[Callable[[SolverState], None]] = None) -> SolverTrace:
    """Projected gradient descent with the standard 1/L step."""
    if feasible_set.project is None:
        raise MissingProjection("projected gradient descent needs a projection")
    _require_feasible_start(feasible_set, x0)
    x = np.asarray(x0, dtype=np.float64).copy()
    builder = _TraceBuilder([])
    k = 0
    while True:
        grad = obj.grad(x)
        try:
            gap = inner(grad, x) - inner(grad, feasible_set.lmo(grad))
        except ZeroDirection:
            gap = 0.0
        builder.row(k, obj.eval(x), gap, np.nan)
        reason = _should_stop(stop, k, gap, builder)
        if reason:
            break
        x = feasible_set.project(x - grad / obj.smoothness)
        k += 1
        _check_iterate(feasible_set, x, "x", k)
        if on_iterate is not None:
            on_iterate(SolverState(k=k, x=x))
    final = SolverState(k=k, x=x)
    return builder.build(_metadata("pgd", "one_over_L", obj, feasible_set,
                                   seed, reason, k), final)
