import numpy as np
import pytest

from pfopt.core import SparseMatrix
from pfopt.objectives import LogisticProblem, logistic_objective


def central_difference(obj, x, direction, eps=1e-6):
    """Independent directional-derivative oracle."""
    return (obj.eval(x + eps * direction) - obj.eval(x - eps * direction)) / (2.0 * eps)


@pytest.fixture
def make_logistic():
    def build(n=10, d=5, seed=0, density=1.0):
        rng = np.random.default_rng(seed)
        a = rng.standard_normal((n, d))
        if density < 1.0:
            a[rng.uniform(size=(n, d)) > density] = 0.0
        labels = np.where(rng.uniform(size=n) < 0.5, -1.0, 1.0)
        problem = LogisticProblem(SparseMatrix.from_dense(a), labels)
        return logistic_objective(problem), a, labels
    return build


def sample_in_l2_ball(rng, dim, radius):
    z = rng.standard_normal(dim)
    return z * (radius * rng.uniform() ** (1.0 / dim) / np.linalg.norm(z))
