"""Dense linear-algebra kernels shared by the path, IC and contrast code.

A single relative SVD threshold (``RANK_TOL``) defines numerical rank
everywhere, so that pseudoinverses, projectors and nullities agree.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

RANK_TOL = 1e-10


class CodimensionError(ValueError):
    """Nested null spaces do not differ by exactly one dimension."""


@dataclass(frozen=True)
class Projector:
    """Orthogonal projector ``matrix`` onto a subspace of dimension ``dim``."""

    matrix: np.ndarray
    dim: int

    def __matmul__(self, other):
        return self.matrix @ other

    def close_to(self, other: "Projector", tol: float = RANK_TOL) -> bool:
        if self.dim != other.dim:
            return False
        return bool(np.max(np.abs(self.matrix - other.matrix), initial=0.0) <= tol * max(1, self.matrix.shape[0]))


def _as2d(A, n=None):
    A = np.asarray(A, dtype=float)
    if A.ndim == 1:
        A = A.reshape(1, -1) if n is None or A.size == n else A.reshape(-1, n)
    if A.size == 0 and n is not None:
        A = A.reshape(0, n)
    return A


def _svd(A, tol):
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return U[:, :0], s[:0], Vt[:0]
    r = int(np.sum(s > tol * s[0]))
    return U[:, :r], s[:r], Vt[:r]


def rank(A, tol: float = RANK_TOL) -> int:
    A = np.asarray(A, dtype=float)
    if A.size == 0:
        return 0
    return _svd(A, tol)[1].size


def pinv(A, tol: float = RANK_TOL) -> np.ndarray:
    """Moore-Penrose pseudoinverse with relative singular value cutoff."""
    A = np.asarray(A, dtype=float)
    if A.size == 0:
        return np.zeros(A.shape[::-1])
    U, s, Vt = _svd(A, tol)
    return (Vt.T / s) @ U.T


def pinv_apply(A, B, tol: float = RANK_TOL) -> np.ndarray:
    """Return ``A^+ B`` via the SVD of ``A``."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.size == 0:
        return np.zeros((A.shape[1],) + B.shape[1:])
    U, s, Vt = _svd(A, tol)
    return Vt.T @ ((U.T @ B) / (s if B.ndim == 1 else s[:, None]))


def null_projector(Dsub, n: int | None = None, tol: float = RANK_TOL) -> Projector:
    """Projector onto ``null(Dsub)``; pass ``n`` when ``Dsub`` may have no rows."""
    Dsub = np.asarray(Dsub, dtype=float)
    if n is None:
        n = Dsub.shape[-1]
    Dsub = Dsub.reshape(-1, n)
    if Dsub.shape[0] == 0:
        return Projector(np.eye(n), n)
    _, _, Vt = _svd(Dsub, tol)
    P = np.eye(n) - Vt.T @ Vt
    return Projector(P, n - Vt.shape[0])


def null_basis(Dsub, n: int | None = None, tol: float = RANK_TOL) -> np.ndarray:
    """Orthonormal basis (columns) of ``null(Dsub)``."""
    Dsub = np.asarray(Dsub, dtype=float)
    if n is None:
        n = Dsub.shape[-1]
    Dsub = Dsub.reshape(-1, n)
    if Dsub.shape[0] == 0:
        return np.eye(n)
    _, s, Vt = np.linalg.svd(Dsub, full_matrices=True)
    r = int(np.sum(s > tol * s[0])) if s.size and s[0] > 0 else 0
    return Vt[r:].T


def nullity(Dsub, n: int | None = None, tol: float = RANK_TOL) -> int:
    Dsub = np.asarray(Dsub, dtype=float)
    if n is None:
        n = Dsub.shape[-1]
    Dsub = Dsub.reshape(-1, n)
    return n - rank(Dsub, tol)


def col_projector(X, tol: float = RANK_TOL) -> np.ndarray:
    """Projector onto the column space of ``X``."""
    X = np.asarray(X, dtype=float)
    if X.size == 0:
        return np.zeros((X.shape[0], X.shape[0]))
    U, _, _ = _svd(X, tol)
    return U @ U.T


def rank1_null_basis(D_minusB, D_minusB_drop, n: int | None = None, tol: float = RANK_TOL) -> np.ndarray:
    """Unit vector spanning ``null(D_minusB) minus null(D_minusB_drop)``.

    ``D_minusB_drop`` has more rows than ``D_minusB``, so its null space is
    nested inside; the orthogonal complement of the smaller space within the
    larger one must be a line.  The sign of the result is arbitrary.
    """
    if n is None:
        n = np.asarray(D_minusB_drop).shape[-1] if np.asarray(D_minusB_drop).size else np.asarray(D_minusB).shape[-1]
    big = null_projector(D_minusB, n, tol)
    small = null_projector(D_minusB_drop, n, tol)
    if big.dim - small.dim != 1:
        raise CodimensionError(f"null spaces differ by {big.dim - small.dim} dimensions, expected 1")
    diff = big.matrix - small.matrix
    evals, evecs = np.linalg.eigh((diff + diff.T) / 2)
    w = evecs[:, -1]
    if abs(evals[-1] - 1.0) > 1e-6:
        raise CodimensionError("null spaces are not nested")
    # canonical sign: first entry of largest magnitude is positive
    k = int(np.argmax(np.abs(w) > np.max(np.abs(w)) * (1 - 1e-9)))
    return w if w[k] > 0 else -w
