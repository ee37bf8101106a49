import numpy as np
import pytest

from conftest import sample_in_l2_ball
from pfopt.core import SparseMatrix
from pfopt.feasible_sets import l1_ball, l2_ball, lp_ball, nuclear_ball
from pfopt.objectives import (MatCompProblem, Objective,
                              diagonal_quadratic_objective,
                              matcomp_initial_point, matcomp_objective,
                              quadratic_objective)
from pfopt.solvers import (InfeasibleStart, MissingProjection,
                           MissingStrongConvexity, StoppingRule,
                           custom_schedule, run_afw, run_agm, run_agm_sc,
                           run_fw, run_projected_gd)

INTERVAL = l1_ball(1.0)  # [-1, 1] in one dimension


def one_d_quadratic():
    return quadratic_objective(np.zeros(1), 1.0)


class TestRunFw:
    def test_hand_trace(self):
        # derived by hand: x = (1, -1, 1/3), f = (1, 1, 1/9)
        trace = run_fw(one_d_quadratic(), INTERVAL, np.array([1.0]),
                       stop=StoppingRule(2))
        assert np.max(np.abs(trace.f_value - [1.0, 1.0, 1.0 / 9.0])) <= 1e-15
        assert abs(trace.final_state.x[0] - 1.0 / 3.0) <= 1e-15
        assert np.array_equal(trace.k, [0, 1, 2])

    def test_stationary_interior_start(self):
        center = np.array([0.2, -0.1])
        obj = quadratic_objective(center, 1.0)
        trace = run_fw(obj, l2_ball(1.0), center, stop=StoppingRule(5))
        assert np.max(np.abs(trace.f_value)) <= 1e-28
        assert np.allclose(trace.final_state.x, center, atol=1e-15)
        assert np.all(trace.fw_gap == 0.0)

    def test_classic_rate_envelope(self):
        # f(x_k) - f* <= 2 L D^2 / (k + 2) on an interior problem
        rng = np.random.default_rng(0)
        center = rng.standard_normal(10) * 0.05
        obj = quadratic_objective(center, 1.0)
        ball = l2_ball(1.0)
        x0 = sample_in_l2_ball(rng, 10, 1.0)
        trace = run_fw(obj, ball, x0, stop=StoppingRule(1500))
        ks = trace.k.astype(float)
        bound = 2 * obj.smoothness * ball.diameter ** 2 / (ks + 2.0)
        assert np.all(trace.f_value[1:] <= bound[1:])

    def test_infeasible_start(self):
        with pytest.raises(InfeasibleStart):
            run_fw(one_d_quadratic(), INTERVAL, np.array([2.0]))

    def test_gap_tolerance_stopping(self):
        trace = run_fw(one_d_quadratic(), INTERVAL, np.array([1.0]),
                       stop=StoppingRule(10_000, gap_tol=1e-3))
        assert trace.metadata["stop_reason"] == "gap_tol"
        assert trace.fw_gap[-1] <= 1e-3
        assert trace.metadata["iterations"] < 10_000

    def test_trace_wall_clock_monotone(self):
        trace = run_fw(one_d_quadratic(), INTERVAL, np.array([1.0]),
                       stop=StoppingRule(20))
        assert np.all(np.diff(trace.wall_time_ns) >= 0)


class TestRunAfw:
    def test_hand_trace(self):
        # derived by hand: y0 = 1, theta1 = 4/3, v1 = -1, x1 = -1/3
        trace = run_afw(one_d_quadratic(), INTERVAL, np.array([1.0]),
                        stop=StoppingRule(1))
        state = trace.final_state
        assert abs(state.theta[0] - 4.0 / 3.0) <= 1e-15
        assert abs(state.v[0] + 1.0) <= 1e-15
        assert abs(state.x[0] + 1.0 / 3.0) <= 1e-15
        assert abs(trace.f_value[-1] - 1.0 / 9.0) <= 1e-15

    def test_stationary_start_flagged(self):
        center = np.array([0.1, 0.1])
        obj = quadratic_objective(center, 1.0)
        trace = run_afw(obj, l2_ball(1.0), center, stop=StoppingRule(50))
        assert trace.metadata["stop_reason"] == "stationary"
        assert trace.metadata["iterations"] == 1
        assert np.allclose(trace.final_state.x, center, atol=1e-15)

    def test_zero_theta_later_reuses_oracle_point(self):
        # scripted gradients with delta = 1/2 make theta_2 vanish exactly
        grads = iter([np.array([1.0]), np.array([-0.5]), np.array([0.25]),
                      np.array([0.3])])
        obj = Objective(eval=lambda x: 0.0, grad=lambda x: next(grads),
                        smoothness=1.0)
        schedule = custom_schedule(lambda k: 0.5)
        trace = run_afw(obj, INTERVAL, np.array([0.0]), schedule=schedule,
                        stop=StoppingRule(2))
        # theta_1 = 0.5, v_1 = -1; theta_2 = 0 so v_2 stays -1
        assert trace.final_state.v[0] == -1.0
        assert trace.metadata["stop_reason"] == "max_iters"
        assert abs(trace.final_state.x[0] + 0.75) <= 1e-15

    def test_convex_combination_identity_bitwise(self):
        rng = np.random.default_rng(1)
        center = rng.standard_normal(6)
        center *= 2.0 / np.linalg.norm(center)
        obj = quadratic_objective(center, 1.0)
        ball = l2_ball(1.0)
        states = []
        run_afw(obj, ball, np.zeros(6), stop=StoppingRule(60),
                on_iterate=states.append)
        xs = [np.zeros(6)] + [s.x for s in states]
        for s in states:
            k = s.k - 1
            delta = 2.0 / (k + 3.0)
            recomputed = (1.0 - delta) * xs[k] + delta * s.v
            assert np.array_equal(recomputed, s.x)

    def test_theta_weighted_average_identity(self):
        # unrolled average with weights 2(tau+2) / ((k+2)(k+3)) at k = 100
        rng = np.random.default_rng(2)
        center = rng.standard_normal(5)
        obj = quadratic_objective(center, 1.0)
        grads_seen = []
        wrapped = Objective(eval=obj.eval,
                            grad=lambda x: grads_seen.append(obj.grad(x)) or grads_seen[-1],
                            smoothness=obj.smoothness)
        trace = run_afw(wrapped, l2_ball(1.0), np.zeros(5),
                        stop=StoppingRule(101))
        k = 100
        weights = 2.0 * (np.arange(k + 1) + 2.0) / ((k + 2.0) * (k + 3.0))
        unrolled = np.tensordot(weights, np.array(grads_seen[:k + 1]), axes=1)
        assert np.max(np.abs(trace.final_state.theta - unrolled)) <= 1e-10

    def test_feasibility_every_iterate(self):
        rng = np.random.default_rng(3)
        center = rng.standard_normal(8)
        center *= 3.0 / np.linalg.norm(center)
        obj = quadratic_objective(center, 1.0)
        for ball in (l2_ball(1.0), l1_ball(1.0), lp_ball(1.0, 3.0)):
            states = []
            run_afw(obj, ball, np.zeros(8), stop=StoppingRule(300),
                    on_iterate=states.append)
            for s in states[::10]:
                assert ball.contains(s.x) and ball.contains(s.v)

    def test_deterministic_traces(self):
        rng = np.random.default_rng(4)
        center = rng.standard_normal(5)
        obj = quadratic_objective(center, 1.0)
        a = run_afw(obj, l2_ball(1.0), np.zeros(5), stop=StoppingRule(100),
                    diagnostics_on=True)
        b = run_afw(obj, l2_ball(1.0), np.zeros(5), stop=StoppingRule(100),
                    diagnostics_on=True)
        assert np.array_equal(a.f_value, b.f_value)
        assert np.array_equal(a.fw_gap, b.fw_gap)
        for name in a.extras:
            assert np.array_equal(a.extras[name], b.extras[name])

    def test_matcomp_run_keeps_rank_certificate(self):
        rng = np.random.default_rng(5)
        dense = (rng.standard_normal((12, 9)) / 6.0)
        mask = rng.uniform(size=dense.shape) < 0.4
        obs = SparseMatrix.from_dense(np.where(mask, dense, 0.0))
        problem = MatCompProblem(obs)
        obj = matcomp_objective(problem)
        ball = nuclear_ball(1.5, obs.shape, obs.rows, obs.cols)
        x0 = matcomp_initial_point(problem, 1.5, seed=0)
        states = []
        trace = run_afw(obj, ball, x0, stop=StoppingRule(40),
                        on_iterate=states.append)
        assert np.all(np.isfinite(trace.f_value))
        for s in states:
            assert s.x.n_atoms <= s.k + 1
            assert s.x.weight_l1() <= 1.5 + 1e-9
            assert s.x.numerical_rank() <= s.k + 1


class TestRunAgm:
    def test_hand_trace(self):
        trace = run_agm(one_d_quadratic(), np.array([1.0]), StoppingRule(1))
        state = trace.final_state
        assert abs(state.x[0]) <= 1e-15
        assert abs(state.v[0]) <= 1e-15
        assert abs(state.mu - 4.0 / 3.0) <= 1e-15

    def test_fixed_point_at_optimum(self):
        center = np.array([0.4, -0.2])
        obj = quadratic_objective(center, 1.0)
        trace = run_agm(obj, center, StoppingRule(20))
        assert np.max(np.abs(trace.f_value)) == 0.0
        assert np.allclose(trace.final_state.x, center, atol=1e-15)

    def test_momentum_ball_with_known_optimum(self):
        rng = np.random.default_rng(7)
        center = rng.standard_normal(5)
        diag = rng.uniform(0.3, 3.0, 5)
        obj = diagonal_quadratic_objective(center, diag)
        x0 = rng.standard_normal(5)
        trace = run_agm(obj, x0, StoppingRule(10_000), x_star=center)
        L = obj.smoothness
        e0 = obj.eval(x0) + L * float((x0 - center) @ (x0 - center))
        assert np.all(trace.extras["dist_v_xstar"] ** 2 <= e0 / L)

    def test_gradient_decay_envelope(self):
        rng = np.random.default_rng(8)
        center = rng.standard_normal(6)
        obj = diagonal_quadratic_objective(center, rng.uniform(0.2, 4.0, 6))
        x0 = rng.standard_normal(6)
        trace = run_agm(obj, x0, StoppingRule(3000), x_star=center)
        L = obj.smoothness
        e0 = obj.eval(x0) + L * float((x0 - center) @ (x0 - center))
        ks = trace.k.astype(float)
        assert np.all(trace.extras["grad_y_norm_sq"]
                      <= 16.0 * L * e0 / (ks + 2.0) ** 2)

    def test_projected_variant_stays_feasible(self, make_logistic):
        obj, _, _ = make_logistic(n=20, d=5, seed=9)
        ball = l1_ball(1.0)
        states = []
        run_agm(obj, np.zeros(5), StoppingRule(200), feasible_set=ball,
                on_iterate=states.append)
        for s in states:
            assert ball.contains(s.x) and ball.contains(s.v)

    def test_missing_projection(self):
        with pytest.raises(MissingProjection):
            run_agm(one_d_quadratic(), np.array([0.0]), StoppingRule(5),
                    feasible_set=lp_ball(1.0, 3.0))


class TestRunAgmSc:
    def test_condition_number_one_converges_in_one_step(self):
        trace = run_agm_sc(one_d_quadratic(), np.array([1.0]), StoppingRule(2))
        assert trace.f_value[0] == 1.0
        assert abs(trace.f_value[1]) <= 1e-30
        assert abs(trace.final_state.x[0]) <= 1e-15

    def test_momentum_decomposition_exact(self):
        rng = np.random.default_rng(10)
        center = rng.standard_normal(4)
        diag = rng.uniform(0.5, 5.0, 4)
        obj = diagonal_quadratic_objective(center, diag)
        mu = obj.strong_convexity
        delta = 1.0 / np.sqrt(obj.smoothness / mu)
        states = []
        x0 = rng.standard_normal(4)
        run_agm_sc(obj, x0, StoppingRule(50), on_iterate=states.append)
        v_prev = x0.copy()
        for s in states:
            grad = obj.grad(s.y)
            z = s.y - grad / mu
            recomputed = (1.0 - delta) * v_prev + delta * z
            assert np.array_equal(recomputed, s.v)
            v_prev = s.v

    def test_linear_convergence_beats_projected_gd(self):
        rng = np.random.default_rng(11)
        d = 8
        diag = np.linspace(0.05, 5.0, d)  # condition number 100
        center = rng.standard_normal(d)
        obj = diagonal_quadratic_objective(center, diag)
        x0 = rng.standard_normal(d)
        sc = run_agm_sc(obj, x0, StoppingRule(200))
        huge = l2_ball(1e6)
        pgd = run_projected_gd(obj, huge, x0, StoppingRule(200))
        assert sc.f_value[-1] * 10.0 <= pgd.f_value[-1]

    def test_requires_strong_convexity(self, make_logistic):
        obj, _, _ = make_logistic(n=6, d=3, seed=12)
        with pytest.raises(MissingStrongConvexity):
            run_agm_sc(obj, np.zeros(3), StoppingRule(5))


class TestRunProjectedGd:
    def test_one_step_to_minimizer(self):
        trace = run_projected_gd(one_d_quadratic(), l2_ball(1.0),
                                 np.array([1.0]), StoppingRule(1))
        assert trace.f_value[0] == 1.0
        assert abs(trace.f_value[-1]) <= 1e-30

    def test_active_constraint_fixed_point(self):
        obj = quadratic_objective(np.array([2.0]), 1.0)
        trace = run_projected_gd(obj, l2_ball(1.0), np.array([0.0]),
                                 StoppingRule(200))
        assert abs(trace.final_state.x[0] - 1.0) <= 1e-12

    def test_monotone_decrease(self, make_logistic):
        obj, _, _ = make_logistic(n=20, d=5, seed=13)
        trace = run_projected_gd(obj, l2_ball(1.0), np.zeros(5),
                                 StoppingRule(300))
        assert np.all(np.diff(trace.f_value) <= 1e-12)

    def test_l1_feasibility_throughout(self, make_logistic):
        obj, _, _ = make_logistic(n=20, d=5, seed=14)
        states = []
        run_projected_gd(obj, l1_ball(1.0), np.zeros(5), StoppingRule(200),
                         on_iterate=states.append)
        for s in states:
            assert np.abs(s.x).sum() <= 1.0 + 1e-9

    def test_missing_projection(self):
        with pytest.raises(MissingProjection):
            run_projected_gd(one_d_quadratic(), lp_ball(1.0, 3.0),
                             np.array([0.0]), StoppingRule(5))


class TestBoundsAndSchedules:
    def test_afw_lambda_closed_form(self):
        rng = np.random.default_rng(15)
        center = rng.standard_normal(4) * 0.2
        obj = quadratic_objective(center, 1.0)
        trace = run_afw(obj, l2_ball(1.0), np.zeros(4), stop=StoppingRule(500),
                        diagnostics_on=True)
        ks = trace.k.astype(float)
        closed = 2.0 / ((ks + 1.0) * (ks + 2.0))
        closed[0] = 1.0
        assert np.max(np.abs(trace.extras["lambda"] - closed)) <= 1e-14

    def test_afw_pointwise_bound_interior(self):
        rng = np.random.default_rng(16)
        center = rng.standard_normal(6)
        center *= 0.4 / np.linalg.norm(center)
        obj = quadratic_objective(center, 1.0)
        ball = l2_ball(1.0)
        x0 = sample_in_l2_ball(rng, 6, 1.0)
        trace = run_afw(obj, ball, x0, stop=StoppingRule(2000))
        f0 = trace.f_value[0]
        ks = trace.k.astype(float)
        bound = (2.0 * f0 / ((ks + 1.0) * (ks + 2.0))
                 + 2.0 * obj.smoothness * ball.diameter ** 2 / (ks + 2.0))
        assert np.all(trace.f_value <= bound * (1 + 1e-9))

    def test_fw_also_respects_momentum_bound_on_logistic(self, make_logistic):
        # soft envelope check with a long projected reference run for f*
        obj, _, _ = make_logistic(n=20, d=5, seed=17)
        ball = l2_ball(1.0)
        ref = run_agm(obj, np.zeros(5), StoppingRule(30_000), feasible_set=ball)
        f_star = ref.f_value.min() - 1e-10
        trace = run_fw(obj, ball, np.zeros(5), stop=StoppingRule(500))
        ks = trace.k.astype(float)
        bound = (2.0 * (trace.f_value[0] - f_star) / ((ks + 1.0) * (ks + 2.0))
                 + 2.0 * obj.smoothness * ball.diameter ** 2 / (ks + 2.0))
        assert np.all(trace.f_value - f_star <= bound * (1 + 1e-9))

    def test_schedule_validation(self):
        bad = custom_schedule(lambda k: 1.5)
        with pytest.raises(ValueError):
            run_fw(one_d_quadratic(), INTERVAL, np.array([1.0]), schedule=bad,
                   stop=StoppingRule(2))
        with pytest.raises(ValueError):
            StoppingRule(0)

    def test_time_budget_stops(self):
        trace = run_fw(one_d_quadratic(), INTERVAL, np.array([1.0]),
                       stop=StoppingRule(10_000_000, time_budget_s=0.05))
        assert trace.metadata["stop_reason"] in ("time_budget", "max_iters")
