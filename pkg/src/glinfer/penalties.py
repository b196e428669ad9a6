"""Penalty matrices for generalized lasso problems.

Every builder returns a :class:`PenaltyMatrix`, a thin immutable wrapper
around a scipy sparse matrix that also remembers what kind of structure it
encodes.  Edge lists and changepoint locations handed in by users are
1-indexed; everything stored internally is a 0-indexed numpy/scipy object.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np
from scipy import sparse

KINDS = ("diff1", "diff2", "graph", "sparse_augmented", "regression_transformed", "custom")


class DimensionError(ValueError):
    """Raised when a builder is asked for a matrix of impossible shape."""


@dataclass(frozen=True, eq=False)
class PenaltyMatrix:
    """Sparse ``m x n`` penalty operator plus structural metadata.

    ``eq=False`` keeps identity hashing, which lets numerical caches be keyed
    on the object itself.
    """

    matrix: sparse.csr_matrix
    kind: str = "custom"
    meta: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown penalty kind {self.kind!r}")
        mat = sparse.csr_matrix(self.matrix, dtype=float)
        mat.eliminate_zeros()
        object.__setattr__(self, "matrix", mat)
        row_nnz = np.diff(mat.indptr)
        if mat.shape[0] and np.any(row_nnz == 0):
            raise ValueError("penalty matrix has an all-zero row")
        # per-object numerical cache (step operators); never part of equality
        object.__setattr__(self, "_cache", {})

    @property
    def m(self) -> int:
        return self.matrix.shape[0]

    @property
    def n(self) -> int:
        return self.matrix.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrix.shape

    @cached_property
    def dense(self) -> np.ndarray:
        out = self.matrix.toarray()
        out.setflags(write=False)
        return out

    def rows(self, idx: Iterable[int]) -> np.ndarray:
        """Dense submatrix ``D_S`` for the 0-indexed row set ``idx``."""
        idx = np.asarray(list(idx), dtype=int)
        return self.dense[idx] if idx.size else np.zeros((0, self.n))

    def rows_except(self, idx: Iterable[int]) -> np.ndarray:
        """Dense submatrix ``D_{-S}``."""
        keep = np.ones(self.m, dtype=bool)
        keep[np.asarray(list(idx), dtype=int)] = False
        return self.dense[keep]

    def __matmul__(self, other):
        return self.matrix @ other

    def __repr__(self):
        return f"PenaltyMatrix(kind={self.kind!r}, shape={self.shape})"


def difference_matrix(n: int, order: int = 1) -> PenaltyMatrix:
    """Discrete difference operator of order 1 or 2 on ``n`` points.

    Order 1 rows are ``(-1, 1)``; order 2 rows use the stencil ``(1, -2, 1)``.
    """
    if order not in (1, 2):
        raise ValueError("only difference orders 1 and 2 are supported")
    if n < order + 1:
        raise DimensionError(f"need n >= {order + 1} for order {order}, got n={n}")
    m = n - order
    if order == 1:
        stencil = (-1.0, 1.0)
    else:
        stencil = (1.0, -2.0, 1.0)
    mat = sparse.diags(stencil, offsets=range(len(stencil)), shape=(m, n), format="csr")
    return PenaltyMatrix(mat, kind=f"diff{order}")


def graph_incidence(n: int, edges: Sequence[tuple[int, int]]) -> PenaltyMatrix:
    """Edge incidence matrix for an undirected graph on nodes ``1..n``.

    Row ``l`` has ``-1`` at ``i_l`` and ``+1`` at ``j_l``; edges must satisfy
    ``i < j`` and appear at most once.
    """
    edges = [(int(i), int(j)) for i, j in edges]
    seen = set()
    for i, j in edges:
        if not (1 <= i <= n and 1 <= j <= n):
            raise ValueError(f"edge ({i}, {j}) references a node outside 1..{n}")
        if i >= j:
            raise ValueError(f"edge ({i}, {j}) must satisfy i < j")
        if (i, j) in seen:
            raise ValueError(f"duplicate edge ({i}, {j})")
        seen.add((i, j))
    m = len(edges)
    if m == 0:
        raise DimensionError("graph has no edges")
    rows = np.repeat(np.arange(m), 2)
    cols = np.array([[i - 1, j - 1] for i, j in edges]).ravel()
    vals = np.tile([-1.0, 1.0], m)
    mat = sparse.csr_matrix((vals, (rows, cols)), shape=(m, n))
    return PenaltyMatrix(mat, kind="graph", meta={"edges": tuple(edges)})


def grid_edges(n_rows: int, n_cols: int) -> list[tuple[int, int]]:
    """1-indexed edges of a 4-neighbour grid, nodes numbered row-major."""
    edges = []
    for r in range(n_rows):
        for c in range(n_cols):
            node = r * n_cols + c + 1
            if c + 1 < n_cols:
                edges.append((node, node + 1))
            if r + 1 < n_rows:
                edges.append((node, node + n_cols))
    return edges


def read_edge_csv(path: str | Path) -> list[tuple[int, int]]:
    """Read a two-column CSV of 1-indexed edges; a header line is skipped."""
    edges = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or not row[0].strip():
                continue
            try:
                i, j = int(row[0]), int(row[1])
            except ValueError:
                if edges:
                    raise
                continue
            edges.append((i, j))
    return edges


def sparse_augment(D: PenaltyMatrix, alpha: float) -> PenaltyMatrix:
    """Row-bind ``alpha * I`` under ``D`` to add a pure sparsity penalty."""
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    mat = sparse.vstack([D.matrix, alpha * sparse.identity(D.n)], format="csr")
    meta = {"alpha": float(alpha), "base_kind": D.kind, "base_rows": D.m, **D.meta}
    return PenaltyMatrix(mat, kind="sparse_augmented", meta=meta)


def custom_penalty(matrix) -> PenaltyMatrix:
    return PenaltyMatrix(sparse.csr_matrix(np.atleast_2d(matrix)), kind="custom")


def block_diff1(n: int, blocks: int) -> PenaltyMatrix:
    """Stack of first differences acting on ``blocks`` length-``n`` coefficient blocks."""
    base = difference_matrix(n, 1).matrix
    mat = sparse.block_diag([base] * blocks, format="csr")
    return PenaltyMatrix(mat, kind="custom", meta={"block_n": n, "blocks": blocks})


@dataclass(frozen=True)
class RegressionTransform:
    """Signal-approximation form of a generalized lasso regression.

    ``design`` is the (possibly ridge-augmented) design actually used, so that
    ``y_tilde = design @ X_pinv @ y_aug`` and ``D_tilde = D @ X_pinv``.
    ``hat`` maps the original response ``y`` to ``y_tilde`` and is what
    pulls polyhedra back to the observation scale.
    """

    y_tilde: np.ndarray
    D_tilde: PenaltyMatrix
    X_pinv: np.ndarray
    ridge: float
    design: np.ndarray
    hat: np.ndarray

    def coef(self, theta: np.ndarray) -> np.ndarray:
        """Map a fitted signal ``theta = X beta`` back to coefficients."""
        return self.X_pinv @ theta

    def fitted(self, theta: np.ndarray) -> np.ndarray:
        """Fitted values on the original ``n`` observations."""
        n = self.hat.shape[1]
        return theta[:n]


def regression_transform(X, y, D: PenaltyMatrix, ridge: float = 0.0, tol: float = 1e-10) -> RegressionTransform:
    """Rewrite ``min 1/2||y - X b||^2 + lam ||D b||_1 (+ ridge ||b||^2)`` as signal approximation."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    if D.n != p:
        raise DimensionError(f"D has {D.n} columns but X has {p}")
    if ridge < 0:
        raise ValueError("ridge must be nonnegative")
    if ridge > 0:
        design = np.vstack([X, np.sqrt(2.0 * ridge) * np.eye(p)])
        y_aug = np.concatenate([y, np.zeros(p)])
    else:
        sv = np.linalg.svd(X, compute_uv=False)
        if sv.size < p or sv[-1] <= tol * sv[0]:
            raise np.linalg.LinAlgError("X is rank deficient; pass ridge > 0")
        design = X
        y_aug = y
    X_pinv = np.linalg.pinv(design, rcond=tol)
    proj = design @ X_pinv
    y_tilde = proj @ y_aug
    D_tilde = PenaltyMatrix(
        sparse.csr_matrix(D.matrix @ X_pinv),
        kind="regression_transformed",
        meta={"ridge": float(ridge), "base_kind": D.kind},
    )
    return RegressionTransform(
        y_tilde=y_tilde,
        D_tilde=D_tilde,
        X_pinv=X_pinv,
        ridge=float(ridge),
        design=design,
        hat=proj[:, :n],
    )
