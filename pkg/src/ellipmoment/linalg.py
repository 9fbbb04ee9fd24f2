"""Symmetric scale matrices, their lower-triangular factors and quadratic forms."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

from .errors import IndefiniteMatrixError, NotPositiveDefiniteError, SingularFactorError

__all__ = [
    "SymMatrix",
    "LowerFactor",
    "as_sym",
    "cholesky",
    "psd_factor",
    "mahalanobis_half",
]

DEFAULT_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class SymMatrix:
    """Symmetric ``n x n`` matrix stored as its lower triangle.

    Build with :meth:`from_array` (checks symmetry) or :meth:`from_lower`.
    ``.array`` always returns an exactly symmetric copy.
    """

    n: int
    lower: np.ndarray = field(repr=False)

    @classmethod
    def from_lower(cls, lower) -> "SymMatrix":
        low = np.tril(np.array(lower, dtype=float, ndmin=2))
        if low.shape[0] != low.shape[1]:
            raise ValueError(f"expected a square matrix, got shape {low.shape}")
        low.setflags(write=False)
        return cls(low.shape[0], low)

    @classmethod
    def from_array(cls, a, atol: float = 1e-12) -> "SymMatrix":
        a = np.array(a, dtype=float, ndmin=2)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError(f"expected a square matrix, got shape {a.shape}")
        scale = max(1.0, float(np.max(np.abs(a)))) if a.size else 1.0
        if not np.allclose(a, a.T, rtol=0.0, atol=atol * scale):
            raise ValueError("matrix is not symmetric")
        return cls.from_lower(a)

    @property
    def array(self) -> np.ndarray:
        low = self.lower
        return low + np.tril(low, -1).T

    def __getitem__(self, ij):
        i, j = ij
        return self.lower[max(i, j), min(i, j)]

    def max_diag(self) -> float:
        return float(np.max(np.diag(self.lower))) if self.n else 0.0


def as_sym(s) -> SymMatrix:
    return s if isinstance(s, SymMatrix) else SymMatrix.from_array(s)


@dataclass(frozen=True, eq=False)
class LowerFactor:
    """Lower-triangular ``A`` with ``A @ A.T`` equal to the source matrix."""

    n: int
    entries: np.ndarray = field(repr=False)
    rank: int

    @property
    def full_rank(self) -> bool:
        return self.rank == self.n

    def reconstruct(self) -> np.ndarray:
        return self.entries @ self.entries.T

    def log_det(self) -> float:
        """``log |A A^T|``; requires full rank."""
        if not self.full_rank:
            raise SingularFactorError("determinant of a rank-deficient factor is zero")
        return 2.0 * float(np.sum(np.log(np.diag(self.entries))))


def cholesky(s, tol: float = DEFAULT_TOL) -> LowerFactor:
    """Cholesky factor by the textbook column recurrences.

    ``a_kk = sqrt(s_kk - sum_{i<k} a_ki^2)`` and
    ``a_ik = (s_ik - sum_{j<k} a_ij a_kj) / a_kk`` for ``i > k``.

    Raises
    ------
    NotPositiveDefiniteError
        If a squared pivot falls below ``tol * max_diag``; ``.index`` is the
        zero-based column.
    """
    s = as_sym(s)
    if tol < 0:
        raise ValueError("tol must be non-negative")
    n = s.n
    sig = s.array
    a = np.zeros((n, n))
    threshold = tol * max(s.max_diag(), 0.0)
    for k in range(n):
        pivot = sig[k, k] - a[k, :k] @ a[k, :k]
        if not pivot > threshold:
            raise NotPositiveDefiniteError(k, float(pivot))
        a[k, k] = np.sqrt(pivot)
        if k + 1 < n:
            a[k + 1 :, k] = (sig[k + 1 :, k] - a[k + 1 :, :k] @ a[k, :k]) / a[k, k]
    a.setflags(write=False)
    return LowerFactor(n, a, n)


def psd_factor(s, tol: float = DEFAULT_TOL) -> LowerFactor:
    """Lower-triangular factor of a positive semidefinite matrix.

    Eigenvalues in ``[-tol*max_diag, tol*max_diag]`` are treated as zero; the
    root ``V sqrt(L)`` is rotated to lower-triangular form with an LQ step.
    """
    s = as_sym(s)
    n = s.n
    if n == 0:
        return LowerFactor(0, np.zeros((0, 0)), 0)
    scale = max(s.max_diag(), 0.0)
    if scale == 0.0:
        if np.any(s.lower != 0.0):
            raise IndefiniteMatrixError("zero diagonal with non-zero off-diagonal entries")
        z = np.zeros((n, n))
        z.setflags(write=False)
        return LowerFactor(n, z, 0)
    w, v = np.linalg.eigh(s.array)
    if w[0] < -tol * scale:
        raise IndefiniteMatrixError(f"smallest eigenvalue {w[0]!r} below -{tol}*{scale}")
    keep = w > tol * scale
    root = v[:, keep] * np.sqrt(w[keep])
    rank = int(keep.sum())
    padded = np.zeros((n, n))
    padded[:, :rank] = root
    # A = L Q  <=>  A^T = Q^T L^T
    r = np.linalg.qr(padded.T, mode="r")
    low = np.asarray(r).T.copy()
    # fix signs so that the leading diagonal entries are non-negative
    signs = np.where(np.diag(low) < 0, -1.0, 1.0)
    low *= signs
    low = np.tril(low)
    low.setflags(write=False)
    return LowerFactor(n, low, rank)


def mahalanobis_half(factor: LowerFactor, x, mu) -> np.ndarray | float:
    """``0.5 * ||A^{-1}(x - mu)||^2`` via a triangular solve.

    ``x`` may be a single vector or an ``(N, n)`` array of rows.
    """
    if not factor.full_rank:
        raise SingularFactorError("quadratic form needs a full-rank factor")
    x = np.asarray(x, dtype=float)
    mu = np.asarray(mu, dtype=float)
    diff = x - mu
    single = diff.ndim == 1
    y = solve_triangular(factor.entries, np.atleast_2d(diff).T, lower=True)
    q = 0.5 * np.sum(y * y, axis=0)
    return float(q[0]) if single else q
