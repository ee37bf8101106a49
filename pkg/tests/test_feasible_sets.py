import itertools

import mpmath as mp
import numpy as np
import pytest

from pfopt.core import SparseMatrix
from pfopt.feasible_sets import (FeasibleSet, ZeroDirection, l1_ball, l2_ball,
                                 lmo_l1, lmo_l2, lmo_lp, lmo_nuclear, lp_ball,
                                 nuclear_ball, project_l1, project_l2)


def l1_vertices(dim, radius):
    """All 2d extreme points of the l1 ball (enumeration oracle)."""
    for i, sign in itertools.product(range(dim), (1.0, -1.0)):
        v = np.zeros(dim)
        v[i] = sign * radius
        yield v


def l1_projection_bisection(z, radius, iters=200):
    """KKT threshold oracle: bisection on tau."""
    if np.abs(z).sum() <= radius:
        return np.asarray(z, dtype=float)
    lo, hi = 0.0, float(np.abs(z).max())
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if np.maximum(np.abs(z) - mid, 0.0).sum() > radius:
            lo = mid
        else:
            hi = mid
    tau = 0.5 * (lo + hi)
    return np.sign(z) * np.maximum(np.abs(z) - tau, 0.0)


def lp_oracle_mpmath(theta, radius, p):
    """High-precision evaluation of the p-norm oracle formula."""
    with mp.workdps(60):
        q = mp.mpf(p) / (mp.mpf(p) - 1)
        vals = [mp.mpf(float(t)) for t in theta]
        norm_q = mp.power(mp.fsum(abs(t) ** q for t in vals if t != 0), 1 / q)
        out = []
        for t in vals:
            if t == 0:
                out.append(0.0)
            else:
                out.append(float(-mp.sign(t) * abs(t) ** (q - 1)
                                 / norm_q ** (q - 1) * radius))
    return np.array(out)


class TestLmoL2:
    def test_unit_scaling(self):
        assert np.allclose(lmo_l2(np.array([3.0, 4.0]), 1.0), [-0.6, -0.8],
                           atol=1e-15)

    def test_axis_aligned(self):
        assert np.allclose(lmo_l2(np.array([0.0, -2.0]), 3.0), [0.0, 3.0],
                           atol=1e-15)

    def test_norm_exactly_radius(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            v = lmo_l2(rng.standard_normal(6), 2.0)
            assert abs(np.linalg.norm(v) - 2.0) <= 1e-12

    def test_optimality_against_samples(self):
        rng = np.random.default_rng(1)
        theta = rng.standard_normal(5)
        v = lmo_l2(theta, 2.0)
        z = rng.standard_normal((1000, 5))
        samples = z * (2.0 * rng.uniform(size=(1000, 1)) ** 0.2
                       / np.linalg.norm(z, axis=1, keepdims=True))
        assert np.all(theta @ v <= samples @ theta + 1e-10)

    def test_zero_direction(self):
        with pytest.raises(ZeroDirection):
            lmo_l2(np.zeros(3), 1.0)


class TestLmoL1:
    def test_dominant_coordinate(self):
        # oracle: brute force over all 2d = 6 vertices
        theta = np.array([3.0, -5.0, 1.0])
        v = lmo_l1(theta, 2.0)
        best = min(l1_vertices(3, 2.0), key=lambda u: theta @ u)
        assert np.array_equal(v, best)
        assert np.array_equal(v, [0.0, 2.0, 0.0])

    def test_tie_breaks_to_smallest_index(self):
        assert np.array_equal(lmo_l1(np.array([2.0, -2.0]), 1.0), [-1.0, 0.0])

    def test_single_dominant(self):
        v = lmo_l1(np.array([1.0, 0.0, 0.0]), 1.0)
        assert np.array_equal(v, [-1.0, 0.0, 0.0])

    @pytest.mark.parametrize("dim", range(1, 13))
    def test_matches_enumeration_exactly(self, dim):
        rng = np.random.default_rng(dim)
        for _ in range(80):
            theta = rng.standard_normal(dim)
            v = lmo_l1(theta, 1.5)
            best = min((theta @ u for u in l1_vertices(dim, 1.5)))
            assert theta @ v == best

    def test_zero_direction(self):
        with pytest.raises(ZeroDirection):
            lmo_l1(np.zeros(2), 1.0)


class TestLmoLp:
    def test_p2_equals_l2(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            theta = rng.standard_normal(7)
            assert np.max(np.abs(lmo_lp(theta, 1.5, 2.0)
                                 - lmo_l2(theta, 1.5))) <= 1e-12

    def test_p4_two_equal_entries(self):
        v = lmo_lp(np.array([1.0, 1.0]), 1.0, 4.0)
        expected = -(2.0 ** -0.25)
        assert np.allclose(v, [expected, expected], atol=1e-12)
        assert abs(np.sum(np.abs(v) ** 4.0) ** 0.25 - 1.0) <= 1e-9

    def test_zero_entries_stay_zero(self):
        v = lmo_lp(np.array([0.0, 2.0]), 1.0, 3.0)
        assert np.array_equal(v, [0.0, -1.0])

    def test_norm_equals_radius(self):
        rng = np.random.default_rng(3)
        for p in (1.3, 2.7, 5.0):
            theta = rng.standard_normal(6)
            v = lmo_lp(theta, 2.0, p)
            assert abs(np.sum(np.abs(v) ** p) ** (1 / p) - 2.0) <= 1e-9

    def test_optimality_against_boundary_samples(self):
        rng = np.random.default_rng(4)
        theta = rng.standard_normal(4)
        p = 4.0
        v = lmo_lp(theta, 1.0, p)
        z = rng.standard_normal((10000, 4))
        boundary = z / (np.sum(np.abs(z) ** p, axis=1, keepdims=True) ** (1 / p))
        assert np.all(theta @ v <= boundary @ theta + 1e-9)

    def test_extreme_magnitudes_use_log_domain(self):
        # oracle: 60-digit arithmetic on the closed form
        theta = np.array([1e-12, -3e8, 2e-10, 0.0])
        for p in (1.2, 3.5):
            v = lmo_lp(theta, 1.0, p)
            ref = lp_oracle_mpmath(theta, 1.0, p)
            assert np.all(np.isfinite(v))
            assert np.max(np.abs(v - ref)) <= 1e-12

    def test_p_validation(self):
        with pytest.raises(ValueError):
            lmo_lp(np.ones(2), 1.0, 1.0)
        with pytest.raises(ValueError):
            lmo_lp(np.ones(2), 1.0, np.inf)

    def test_zero_direction(self):
        with pytest.raises(ZeroDirection):
            lmo_lp(np.zeros(2), 1.0, 3.0)


class TestLmoNuclear:
    def test_diagonal_example(self):
        grad = SparseMatrix.from_dense(np.diag([5.0, 1.0]))
        scale, p, q = lmo_nuclear(grad, 2.0, tol=1e-13)
        dense = scale * np.outer(p, q)
        # oracle: dense SVD of the 2x2 matrix
        u, s, vt = np.linalg.svd(np.diag([5.0, 1.0]))
        expected = -2.0 * np.outer(u[:, 0], vt[0])
        assert np.allclose(dense, expected, atol=1e-8)
        assert np.allclose(dense, [[-2.0, 0.0], [0.0, 0.0]], atol=1e-8)

    def test_rank_one_input(self):
        rng = np.random.default_rng(5)
        u = rng.standard_normal(5)
        u /= np.linalg.norm(u)
        w = rng.standard_normal(3)
        w /= np.linalg.norm(w)
        scale, p, q = lmo_nuclear(SparseMatrix.from_dense(np.outer(u, w)), 1.0,
                                  tol=1e-13)
        assert np.allclose(scale * np.outer(p, q), -np.outer(u, w), atol=1e-8)

    def test_implied_nuclear_norm_is_radius(self):
        rng = np.random.default_rng(6)
        grad = SparseMatrix.from_dense(rng.standard_normal((6, 5)))
        scale, p, q = lmo_nuclear(grad, 3.0, tol=1e-12)
        svals = np.linalg.svd(scale * np.outer(p, q), compute_uv=False)
        assert abs(svals.sum() - 3.0) <= 1e-9
        assert np.sum(svals > 1e-12) == 1

    def test_optimality_against_sampled_feasible_matrices(self):
        rng = np.random.default_rng(7)
        dense = rng.standard_normal((6, 5))
        grad = SparseMatrix.from_dense(dense)
        scale, p, q = lmo_nuclear(grad, 2.0, tol=1e-13)
        value = float(np.sum(dense * (scale * np.outer(p, q))))
        for _ in range(500):
            # random unit outer products and their convex combinations
            n_atoms = rng.integers(1, 4)
            w = rng.dirichlet(np.ones(n_atoms)) * 2.0
            sample = np.zeros((6, 5))
            for i in range(n_atoms):
                a = rng.standard_normal(6)
                b = rng.standard_normal(5)
                sign = rng.choice([-1.0, 1.0])
                sample += sign * w[i] * np.outer(a / np.linalg.norm(a),
                                                 b / np.linalg.norm(b))
            assert value <= float(np.sum(dense * sample)) + 1e-6

    def test_zero_gradient(self):
        grad = SparseMatrix(3, 3, [0], [0], [0.0])
        with pytest.raises(ZeroDirection):
            lmo_nuclear(grad, 1.0)


class TestProjections:
    def test_l2_interior_unchanged(self):
        z = np.array([0.1, 0.2])
        assert np.array_equal(project_l2(z, 1.0), z)

    def test_l2_radial_scaling(self):
        assert np.allclose(project_l2(np.array([3.0, 4.0]), 1.0), [0.6, 0.8],
                           atol=1e-15)

    def test_l2_nearest_among_samples(self):
        rng = np.random.default_rng(8)
        z = rng.standard_normal(4) * 3
        proj = project_l2(z, 1.0)
        best = np.inf
        for _ in range(10000):
            w = rng.standard_normal(4)
            x = w * (rng.uniform() ** 0.25 / np.linalg.norm(w))
            best = min(best, np.linalg.norm(x - z))
        assert np.linalg.norm(proj - z) <= best + 1e-9

    def test_l1_interior_unchanged(self):
        z = np.array([0.5, 0.3])
        assert np.array_equal(project_l1(z, 1.0), z)

    def test_l1_single_coordinate(self):
        assert np.allclose(project_l1(np.array([2.0, 0.0]), 1.0), [1.0, 0.0],
                           atol=1e-15)

    def test_l1_symmetric_split(self):
        # oracle: KKT bisection on the threshold
        z = np.array([1.0, 1.0])
        ref = l1_projection_bisection(z, 1.0)
        out = project_l1(z, 1.0)
        assert np.allclose(out, [0.5, 0.5], atol=1e-12)
        assert np.allclose(out, ref, atol=1e-10)

    def test_l1_matches_bisection_oracle(self):
        rng = np.random.default_rng(9)
        for _ in range(50):
            z = rng.standard_normal(8) * rng.uniform(0.5, 4.0)
            assert np.allclose(project_l1(z, 1.0),
                               l1_projection_bisection(z, 1.0), atol=1e-10)

    def test_l1_kkt_conditions(self):
        rng = np.random.default_rng(10)
        for _ in range(50):
            z = rng.standard_normal(6) * 2
            x = project_l1(z, 1.0)
            assert np.abs(x).sum() <= 1.0 + 1e-12
            if np.abs(z).sum() > 1.0:
                shrink = np.abs(z) - np.abs(x)
                active = np.abs(x) > 0
                tau = shrink[active].max()
                assert shrink[active].min() >= tau - 1e-10
                assert np.all(np.abs(z)[~active] <= tau + 1e-10)
                assert np.all(np.sign(x[active]) == np.sign(z[active]))


class TestFeasibleSetBindings:
    @pytest.mark.parametrize("ball", [l2_ball(2.0), l1_ball(2.0),
                                      lp_ball(2.0, 3.0)])
    def test_lmo_output_is_feasible_and_optimal(self, ball):
        rng = np.random.default_rng(11)
        for _ in range(20):
            theta = rng.standard_normal(5)
            v = ball.lmo(theta)
            assert ball.contains(v)
            for _ in range(50):
                z = rng.standard_normal(5)
                x = z * (2.0 * rng.uniform() ** 0.2 / np.linalg.norm(z))
                if ball.contains(x):
                    assert float(theta @ v) <= float(theta @ x) + 1e-9

    def test_diameter_is_twice_radius(self):
        assert l2_ball(1.5).diameter == 3.0
        assert l1_ball(2.0).diameter == 4.0
        assert lp_ball(0.5, 4.0).diameter == 1.0

    def test_descriptors(self):
        assert l2_ball(1.0).descriptor == {"kind": "l2_ball", "radius": 1.0}
        assert lp_ball(1.0, 3.0).descriptor["p"] == 3.0

    def test_nuclear_ball_contains_factored(self):
        rows, cols = np.array([0, 1]), np.array([0, 1])
        ball = nuclear_ball(2.0, (3, 3), rows, cols)
        grad = SparseMatrix(3, 3, rows, cols, np.array([1.0, -2.0]))
        v = ball.lmo(grad)
        assert ball.contains(v)
        assert v.weight_l1() == pytest.approx(2.0)

    def test_projection_absent_where_expensive(self):
        assert lp_ball(1.0, 3.0).project is None
        rows, cols = np.array([0]), np.array([0])
        assert nuclear_ball(1.0, (2, 2), rows, cols).project is None
        assert l2_ball(1.0).project is not None
        assert l1_ball(1.0).project is not None
