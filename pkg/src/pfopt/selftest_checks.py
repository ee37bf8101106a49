"""Built-in invariant suite behind `pfopt selftest`.

Each check is a no-argument callable that raises AssertionError on
failure. The suite favors breadth over depth; the pytest suite runs the
heavier property tests.
"""

from __future__ import annotations

import itertools

import numpy as np

from . import data_io, diagnostics, feasible_sets, objectives, solvers
from .core import SparseMatrix


def _check_lmo_optimality():
    rng = np.random.default_rng(100)
    for _ in range(25):
        d = rng.integers(2, 8)
        theta = rng.standard_normal(d)
        for ball in (feasible_sets.l2_ball(2.0), feasible_sets.l1_ball(2.0),
                     feasible_sets.lp_ball(2.0, 3.0)):
            v = ball.lmo(theta)
            assert ball.contains(v), "oracle output must be feasible"
            for _ in range(40):
                z = rng.standard_normal(d)
                x = z * (2.0 * rng.uniform() ** (1 / d) / np.linalg.norm(z))
                if ball.contains(x):
                    assert theta @ v <= theta @ x + 1e-9


def _check_lmo_l1_enumeration():
    rng = np.random.default_rng(101)
    for _ in range(50):
        d = int(rng.integers(1, 13))
        theta = rng.standard_normal(d)
        v = feasible_sets.lmo_l1(theta, 1.5)
        best = min((np.eye(d)[i] * s * 1.5 for i, s in
                    itertools.product(range(d), (1.0, -1.0))),
                   key=lambda u: theta @ u)
        assert abs(theta @ v - theta @ best) == 0.0


def _check_projections():
    rng = np.random.default_rng(102)
    for _ in range(50):
        z = rng.standard_normal(6) * 3
        x = feasible_sets.project_l1(z, 1.0)
        assert np.abs(x).sum() <= 1.0 + 1e-12
        # KKT: active coordinates share the shrinkage, inactive are dominated
        shrunk = np.abs(z) - np.abs(x)
        active = np.abs(x) > 0
        if active.any() and np.abs(z).sum() > 1.0:
            tau = shrunk[active][0]
            assert np.allclose(shrunk[active], tau, atol=1e-10)
            assert np.all(np.abs(z)[~active] <= tau + 1e-10)
        y = feasible_sets.project_l2(z, 1.0)
        assert np.linalg.norm(y) <= 1.0 + 1e-12


def _finite_difference(obj, x, direction, eps=1e-6):
    return (obj.eval(x + eps * direction) - obj.eval(x - eps * direction)) / (2 * eps)


def _check_gradients():
    rng = np.random.default_rng(103)
    quad = objectives.quadratic_objective(rng.standard_normal(5), 0.7)
    features = SparseMatrix.from_dense(rng.standard_normal((12, 5)))
    labels = np.sign(rng.standard_normal(12))
    labels[labels == 0] = 1.0
    logi = objectives.logistic_objective(objectives.LogisticProblem(features, labels))
    for obj in (quad, logi):
        for _ in range(20):
            x = rng.standard_normal(5)
            u = rng.standard_normal(5)
            dd = float(obj.grad(x) @ u)
            fd = _finite_difference(obj, x, u)
            assert abs(dd - fd) <= 1e-5 * max(1.0, abs(fd))


def _check_cocoercivity():
    rng = np.random.default_rng(104)
    features = SparseMatrix.from_dense(rng.standard_normal((15, 4)))
    labels = np.where(rng.uniform(size=15) < 0.5, -1.0, 1.0)
    obj = objectives.logistic_objective(objectives.LogisticProblem(features, labels))
    L = obj.smoothness
    for _ in range(50):
        x, y = rng.standard_normal(4), rng.standard_normal(4)
        gx, gy = obj.grad(x), obj.grad(y)
        lhs = float((gx - gy) @ (gx - gy)) / (2 * L)
        rhs = obj.eval(y) - obj.eval(x) - float(gx @ (y - x))
        assert lhs <= rhs + 1e-9


def _check_hand_traces():
    interval = feasible_sets.l1_ball(1.0)
    obj = objectives.quadratic_objective(np.zeros(1), 1.0)
    fw = solvers.run_fw(obj, interval, np.array([1.0]),
                        stop=solvers.StoppingRule(2))
    assert np.allclose(fw.f_value, [1.0, 1.0, 1.0 / 9.0], atol=1e-15)
    afw = solvers.run_afw(obj, interval, np.array([1.0]),
                          stop=solvers.StoppingRule(1))
    assert abs(afw.final_state.theta[0] - 4.0 / 3.0) <= 1e-15
    assert abs(afw.final_state.v[0] + 1.0) <= 1e-15
    assert abs(afw.final_state.x[0] + 1.0 / 3.0) <= 1e-15
    agm = solvers.run_agm(obj, np.array([1.0]), solvers.StoppingRule(1))
    assert abs(agm.final_state.x[0]) <= 1e-15
    assert abs(agm.final_state.v[0]) <= 1e-15
    assert abs(agm.final_state.mu - 4.0 / 3.0) <= 1e-15


def _check_es_sandwich():
    rng = np.random.default_rng(105)
    center = rng.standard_normal(5) * 0.1
    obj = objectives.quadratic_objective(center, 1.0)
    ball = feasible_sets.l2_ball(1.0)
    x0 = np.full(5, 0.4)  # norm sqrt(0.8), inside the unit ball
    trace = solvers.run_afw(obj, ball, x0,
                            stop=solvers.StoppingRule(200), diagnostics_on=True)
    bound = trace.extras["phi_star"] + trace.extras["xi"]
    assert np.all(trace.f_value <= bound + 1e-9 * np.maximum(1.0, np.abs(bound)))
    ks = trace.k.astype(float)
    lam_closed = 2.0 / ((ks + 1.0) * (ks + 2.0))
    lam_closed[0] = 1.0
    assert np.max(np.abs(trace.extras["lambda"] - lam_closed)) <= 1e-14


def _check_dual_gap():
    rng = np.random.default_rng(106)
    center = rng.standard_normal(5)
    obj = objectives.quadratic_objective(center, 1.0)
    x0 = rng.standard_normal(5)
    trace = solvers.run_agm(obj, x0, solvers.StoppingRule(150), x_star=center)
    L = obj.smoothness
    for k in (10, 100):
        w = diagnostics.dual_gap_weights(k)
        assert abs(w.sum() - 1.0) <= 1e-12
        gap = diagnostics.weighted_dual_gap(trace, k)
        bound = 2 * L * float((x0 - center) @ (x0 - center)) / (k * (k + 3))
        assert gap - 0.0 <= bound  # f* = 0 for this quadratic


def _check_momentum_equivalence():
    rng = np.random.default_rng(107)
    for _ in range(100):
        v = rng.standard_normal(6)
        g = rng.standard_normal(6)
        _, resid = diagnostics.agm_momentum_equivalence(v, g, 0.4, 1.3)
        assert resid < 1e-12


def _check_determinism():
    rng = np.random.default_rng(108)
    center = rng.standard_normal(4)
    obj = objectives.quadratic_objective(center, 1.0)
    ball = feasible_sets.l2_ball(1.0)
    x0 = np.zeros(4)
    runs = [solvers.run_afw(obj, ball, x0, stop=solvers.StoppingRule(50),
                            diagnostics_on=True) for _ in range(2)]
    a = data_io.write_trace_string(runs[0]).splitlines()
    b = data_io.write_trace_string(runs[1]).splitlines()
    # every column but wall-clock must agree byte for byte
    strip = [",".join(line.split(",")[:4] + line.split(",")[5:]) for line in a]
    strip_b = [",".join(line.split(",")[:4] + line.split(",")[5:]) for line in b]
    assert strip == strip_b


def all_checks():
    return [
        ("lmo optimality vs sampled feasible points", _check_lmo_optimality),
        ("l1 lmo equals vertex enumeration", _check_lmo_l1_enumeration),
        ("projections satisfy feasibility and KKT", _check_projections),
        ("objective gradients match finite differences", _check_gradients),
        ("smooth convex co-coercivity inequality", _check_cocoercivity),
        ("one-dimensional hand traces replay", _check_hand_traces),
        ("surrogate sandwich and contraction weights", _check_es_sandwich),
        ("weighted dual gap bound", _check_dual_gap),
        ("momentum closed form stationarity", _check_momentum_equivalence),
        ("seeded runs are deterministic", _check_determinism),
    ]
