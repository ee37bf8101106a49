"""Numeric primitives shared across the toolkit.

Vectors are plain 1-d float64 numpy arrays throughout. This module adds the
two structured carriers the solvers need (coordinate sparse matrices and
factored low-rank matrices) plus seeded power iteration for dominant
eigen/singular pairs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np
import scipy.sparse as sp


class ZeroOperator(Exception):
    """The linear operator annihilates every probed direction."""


class DimensionMismatch(Exception):
    """Operands have incompatible shapes."""


def as_vector(x, dim=None):
    """Validate and return a finite 1-d float64 array."""
    v = np.asarray(x, dtype=np.float64)
    if v.ndim != 1:
        raise DimensionMismatch(f"expected a 1-d vector, got shape {v.shape}")
    if dim is not None and v.shape[0] != dim:
        raise DimensionMismatch(f"expected dimension {dim}, got {v.shape[0]}")
    if not np.all(np.isfinite(v)):
        raise ValueError("vector has non-finite entries")
    return v


def rng_from_seed(seed):
    """Deterministic generator from a 64-bit unsigned seed."""
    seed = int(seed)
    if not 0 <= seed < 2**64:
        raise ValueError("seed must fit in an unsigned 64-bit integer")
    return np.random.default_rng(seed)


class SparseMatrix:
    """Coordinate-form sparse matrix with unique, in-bounds entries.

    Matrix-vector products are delegated to a cached CSR view; the
    coordinate arrays stay authoritative so masks and supports can be
    shared by reference between gradients of the same problem.
    """

    __slots__ = ("n_rows", "n_cols", "rows", "cols", "values", "_csr", "_csc")

    def __init__(self, n_rows, n_cols, rows, cols, values, _validate=True):
        self.n_rows = int(n_rows)
        self.n_cols = int(n_cols)
        self.rows = np.asarray(rows, dtype=np.int64)
        self.cols = np.asarray(cols, dtype=np.int64)
        self.values = np.asarray(values, dtype=np.float64)
        self._csr = None
        self._csc = None
        if _validate:
            self._validate()

    def _validate(self):
        if self.n_rows <= 0 or self.n_cols <= 0:
            raise ValueError("matrix dimensions must be positive")
        if not (self.rows.shape == self.cols.shape == self.values.shape):
            raise DimensionMismatch("coordinate arrays must have equal length")
        if self.nnz:
            if self.rows.min() < 0 or self.rows.max() >= self.n_rows:
                raise ValueError("row index out of bounds")
            if self.cols.min() < 0 or self.cols.max() >= self.n_cols:
                raise ValueError("column index out of bounds")
            flat = self.rows * self.n_cols + self.cols
            if np.unique(flat).size != flat.size:
                raise ValueError("duplicate (row, col) coordinates")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("matrix values must be finite")

    @property
    def shape(self):
        return (self.n_rows, self.n_cols)

    @property
    def nnz(self):
        return self.values.size

    @classmethod
    def from_dense(cls, a):
        a = np.asarray(a, dtype=np.float64)
        rows, cols = np.nonzero(a)
        return cls(a.shape[0], a.shape[1], rows, cols, a[rows, cols])

    def to_dense(self):
        out = np.zeros(self.shape)
        out[self.rows, self.cols] = self.values
        return out

    def with_values(self, values):
        """Same sparsity pattern, new values (pattern shared by reference)."""
        values = np.asarray(values, dtype=np.float64)
        if values.shape != self.values.shape:
            raise DimensionMismatch("value array does not match the pattern")
        out = SparseMatrix(self.n_rows, self.n_cols, self.rows, self.cols,
                           values, _validate=False)
        return out

    def _as_csr(self):
        if self._csr is None:
            self._csr = sp.csr_matrix(
                (self.values, (self.rows, self.cols)), shape=self.shape)
        return self._csr

    def _as_csc(self):
        if self._csc is None:
            self._csc = sp.csc_matrix(
                (self.values, (self.rows, self.cols)), shape=self.shape)
        return self._csc

    def matvec(self, x):
        x = as_vector(x, self.n_cols)
        return self._as_csr() @ x

    def rmatvec(self, y):
        y = as_vector(y, self.n_rows)
        return self._as_csc().T @ y

    def gram_matvec(self, x):
        """x -> G^T (G x), the PSD operator used for singular pairs."""
        return self.rmatvec(self.matvec(x))

    def frobenius_norm(self):
        return float(np.linalg.norm(self.values))

    def same_pattern(self, other):
        return (self.shape == other.shape
                and self.rows is other.rows and self.cols is other.cols) or (
                    self.shape == other.shape
                    and np.array_equal(self.rows, other.rows)
                    and np.array_equal(self.cols, other.cols))


class PowerIterationResult(NamedTuple):
    value: float
    vector: np.ndarray
    converged: bool


def power_iteration(operator: Callable[[np.ndarray], np.ndarray], dim: int,
                    tol: float = 1e-10, max_iter: int = 5000,
                    seed: int = 0) -> PowerIterationResult:
    """Dominant eigenpair of a symmetric PSD operator.

    `operator` maps a vector of length `dim` to another. Convergence is
    declared when the relative residual ||Mv - lam*v|| / lam drops below
    `tol`. If the first seeded start fails to converge within `max_iter`
    sweeps (for instance because it is orthogonal to the dominant
    eigenspace) the iteration restarts once with a fresh direction from
    the same generator and the better of the two passes is returned.

    Raises ZeroOperator when the operator maps two independent random
    starts to the zero vector.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if max_iter < 1:
        raise ValueError("max_iter must be at least 1")
    rng = rng_from_seed(seed)

    best = None  # (residual, value, vector)
    zero_starts = 0
    for _ in range(2):
        v = rng.standard_normal(dim)
        v /= np.linalg.norm(v)
        w = operator(v)
        if np.linalg.norm(w) == 0.0:
            zero_starts += 1
            if zero_starts == 2:
                raise ZeroOperator("operator maps two independent starts to zero")
            continue
        for _ in range(max_iter):
            lam = float(v @ w)
            resid = np.linalg.norm(w - lam * v)
            rel = resid / lam if lam > 0 else np.inf
            if best is None or rel < best[0]:
                best = (rel, lam, v)
            if rel <= tol:
                return PowerIterationResult(lam, v, True)
            norm_w = np.linalg.norm(w)
            if norm_w == 0.0:
                break  # landed exactly in the nullspace; restart
            v = w / norm_w
            w = operator(v)
    if best is None:
        raise ZeroOperator("operator maps two independent starts to zero")
    return PowerIterationResult(best[1], best[2], False)


class SingularPair(NamedTuple):
    sigma: float
    left: np.ndarray
    right: np.ndarray


def top_singular_pair(matrix: SparseMatrix, tol: float = 1e-10,
                      max_iter: int = 5000, seed: int = 0) -> SingularPair:
    """Leading singular triple (sigma, p, q) of a sparse matrix.

    Runs power iteration on the Gram operator G^T G, never densifying G.
    The sign is fixed so the largest-magnitude entry of the left vector is
    positive, keeping traces deterministic. Raises ZeroOperator for an
    all-zero matrix.
    """
    if np.all(matrix.values == 0.0):
        raise ZeroOperator("matrix has no nonzero entries")
    _, q, _ = power_iteration(matrix.gram_matvec, matrix.n_cols,
                              tol=tol, max_iter=max_iter, seed=seed)
    gq = matrix.matvec(q)
    sigma = float(np.linalg.norm(gq))
    if sigma == 0.0:
        # q fell exactly in the nullspace; one deterministic retry.
        _, q, _ = power_iteration(matrix.gram_matvec, matrix.n_cols,
                                  tol=tol, max_iter=max_iter, seed=seed + 1)
        gq = matrix.matvec(q)
        sigma = float(np.linalg.norm(gq))
        if sigma == 0.0:
            raise ZeroOperator("power iteration found only nullspace directions")
    p = gq / sigma
    if p[np.argmax(np.abs(p))] < 0:
        p = -p
        q = -q
    return SingularPair(sigma, p, q)


@dataclass
class FactoredMatrix:
    """Low-rank matrix stored as a weighted list of unit rank-one atoms.

    X = sum_i weights[i] * left[:, i] right[:, i]^T, with every column of
    `left`/`right` unit norm. The entries of X on a fixed observation mask
    are cached and updated in O(mask) per convex combination, so objective
    and gradient evaluations never materialize the dense matrix. The atom
    list grows by at most one per combination, which bounds the rank of
    the k-th iterate by k + 1.
    """

    shape: tuple
    weights: np.ndarray
    left: np.ndarray   # (m, t)
    right: np.ndarray  # (n, t)
    mask_rows: np.ndarray
    mask_cols: np.ndarray
    mask_values: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.mask_values is None:
            self.mask_values = self._recompute_mask_values()

    def _recompute_mask_values(self):
        if self.n_atoms == 0:
            return np.zeros(self.mask_rows.size)
        return (self.left[self.mask_rows, :]
                * self.right[self.mask_cols, :]) @ self.weights

    @property
    def n_atoms(self):
        return self.weights.size

    @classmethod
    def rank_one(cls, weight, p, q, mask_rows, mask_cols):
        p = as_vector(p)
        q = as_vector(q)
        vals = weight * p[mask_rows] * q[mask_cols]
        return cls((p.size, q.size), np.array([float(weight)]),
                   p[:, None].copy(), q[:, None].copy(),
                   mask_rows, mask_cols, vals)

    @classmethod
    def zero(cls, shape, mask_rows, mask_cols):
        m, n = shape
        return cls((m, n), np.zeros(0), np.zeros((m, 0)), np.zeros((n, 0)),
                   mask_rows, mask_cols, np.zeros(mask_rows.size))

    def convex_combine(self, other: "FactoredMatrix", delta: float) -> "FactoredMatrix":
        """(1 - delta) * self + delta * other, folding weights."""
        if self.shape != other.shape:
            raise DimensionMismatch("factored matrices have different shapes")
        return FactoredMatrix(
            self.shape,
            np.concatenate([(1.0 - delta) * self.weights, delta * other.weights]),
            np.hstack([self.left, other.left]),
            np.hstack([self.right, other.right]),
            self.mask_rows, self.mask_cols,
            (1.0 - delta) * self.mask_values + delta * other.mask_values)

    def weight_l1(self):
        """Sum of |weights|; an upper bound on the nuclear norm."""
        return float(np.sum(np.abs(self.weights)))

    def frobenius_inner(self, other: "FactoredMatrix") -> float:
        if self.n_atoms == 0 or other.n_atoms == 0:
            return 0.0
        cross = (self.left.T @ other.left) * (self.right.T @ other.right)
        return float(self.weights @ cross @ other.weights)

    def consolidated(self, cos_tol=1e-12):
        """Merge atoms whose outer products coincide up to sign.

        Called at logging points only; keeps the atom list (and the rank
        certificate it provides) tight after repeated oracle fallbacks.
        """
        if self.n_atoms <= 1:
            return self
        keep_w, keep_idx = [], []
        pp = self.left.T @ self.left
        qq = self.right.T @ self.right
        for i in range(self.n_atoms):
            merged = False
            for j_pos, j in enumerate(keep_idx):
                if abs(abs(pp[i, j] * qq[i, j]) - 1.0) <= cos_tol:
                    keep_w[j_pos] += self.weights[i] * np.sign(pp[i, j] * qq[i, j])
                    merged = True
                    break
            if not merged:
                keep_idx.append(i)
                keep_w.append(self.weights[i])
        idx = np.array(keep_idx, dtype=np.int64)
        return FactoredMatrix(self.shape, np.array(keep_w),
                              self.left[:, idx], self.right[:, idx],
                              self.mask_rows, self.mask_cols,
                              self.mask_values)

    def numerical_rank(self, rel_tol=1e-9):
        """Rank of the represented matrix via QR of the thin factors."""
        if self.n_atoms == 0:
            return 0
        _, r_left = np.linalg.qr(self.left, mode="reduced")
        _, r_right = np.linalg.qr(self.right, mode="reduced")
        small = r_left @ np.diag(self.weights) @ r_right.T
        svals = np.linalg.svd(small, compute_uv=False)
        if svals.size == 0 or svals[0] == 0.0:
            return 0
        return int(np.sum(svals > rel_tol * svals[0]))

    def to_dense(self):
        return (self.left * self.weights) @ self.right.T


# ---------------------------------------------------------------------------
# Point algebra shared by solvers and diagnostics. Keeping these in one
# place guarantees that repeated expressions (momentum averages, convex
# combinations) are evaluated with identical floating-point operation
# order wherever they appear.

def _aligned_sparse(a: SparseMatrix, b: SparseMatrix):
    if not a.same_pattern(b):
        raise DimensionMismatch("sparse operands have different patterns")


def combine(x, v, delta: float):
    """(1 - delta) * x + delta * v for vector or factored-matrix points."""
    if isinstance(x, FactoredMatrix):
        return x.convex_combine(v, delta)
    return (1.0 - delta) * x + delta * v


def lincomb(a: float, x, b: float, y):
    """a * x + b * y in gradient space (dense vectors or aligned sparse)."""
    if isinstance(x, SparseMatrix):
        _aligned_sparse(x, y)
        return x.with_values(a * x.values + b * y.values)
    return a * x + b * y


def inner(grad, point) -> float:
    """<grad, point> where grad lives in gradient space.

    Sparse gradients pair with factored-matrix points through the cached
    mask entries, so the product never touches unobserved coordinates.
    """
    if isinstance(grad, SparseMatrix):
        if isinstance(point, FactoredMatrix):
            if not (grad.rows is point.mask_rows
                    or np.array_equal(grad.rows, point.mask_rows)):
                raise DimensionMismatch("gradient mask does not match the point")
            return float(grad.values @ point.mask_values)
        if isinstance(point, SparseMatrix):
            _aligned_sparse(grad, point)
            return float(grad.values @ point.values)
        raise DimensionMismatch("sparse gradient paired with a dense point")
    return float(np.asarray(grad) @ np.asarray(point))


def gnorm(grad) -> float:
    """Euclidean (Frobenius) norm in gradient space."""
    if isinstance(grad, SparseMatrix):
        return grad.frobenius_norm()
    return float(np.linalg.norm(grad))


def diff_norm_sq(a, b) -> float:
    """||a - b||^2 for vector or factored-matrix points."""
    if isinstance(a, FactoredMatrix):
        return (a.frobenius_inner(a) + b.frobenius_inner(b)
                - 2.0 * a.frobenius_inner(b))
    d = np.asarray(a) - np.asarray(b)
    return float(d @ d)


def zeros_like_grad(grad):
    """The zero element of the gradient space containing `grad`."""
    if isinstance(grad, SparseMatrix):
        return grad.with_values(np.zeros_like(grad.values))
    return np.zeros_like(grad)
