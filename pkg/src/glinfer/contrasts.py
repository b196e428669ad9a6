"""Contrast vectors read off a selected generalized lasso model.

Locations exposed here are 1-based: for a difference penalty the location
``I`` of a boundary row is its 1-based row number, so a first-difference
changepoint ``I`` separates positions ``I`` and ``I + 1``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .linalg import RANK_TOL, col_projector, rank, rank1_null_basis
from .path import PathTrace
from .penalties import PenaltyMatrix
from .tg import Contrast


class ContrastError(ValueError):
    """The requested contrast is undefined for this model."""


@dataclass(frozen=True)
class SelectedModel1D:
    """Sorted changepoints (1-based rows of ``D``) with their jump signs."""

    n: int
    changepoints: tuple
    signs: tuple
    order: int = 1

    def __post_init__(self):
        cps = tuple(int(c) for c in self.changepoints)
        sg = tuple(int(s) for s in self.signs)
        if len(cps) != len(sg):
            raise ValueError("changepoints and signs differ in length")
        if list(cps) != sorted(set(cps)):
            raise ValueError("changepoints must be strictly increasing")
        if cps and not (1 <= cps[0] and cps[-1] <= self.n - self.order):
            raise ValueError("changepoint outside the valid range")
        object.__setattr__(self, "changepoints", cps)
        object.__setattr__(self, "signs", sg)

    @property
    def k(self) -> int:
        return len(self.changepoints)

    @property
    def rows(self) -> tuple:
        """0-based rows of ``D``."""
        return tuple(c - 1 for c in self.changepoints)

    def _check(self, j):
        if not 1 <= j <= self.k:
            raise ContrastError(f"j={j} outside 1..{self.k}")
        return self.changepoints[j - 1], self.signs[j - 1]


@dataclass(frozen=True)
class GraphPartition:
    """Connected components after deleting boundary edges.

    ``labels[i]`` is the 0-based component of node ``i + 1``; ``edges`` are
    1-based pairs and ``boundary`` maps 0-based edge rows to dual signs.
    """

    n: int
    labels: np.ndarray
    edges: tuple
    boundary: dict

    @property
    def n_components(self) -> int:
        return int(self.labels.max()) + 1 if self.labels.size else 0

    def component(self, c: int) -> np.ndarray:
        """1-based nodes of component ``c``."""
        return np.flatnonzero(self.labels == c) + 1


@dataclass(frozen=True)
class StepSignModel:
    """Locations and signs of a selected model; nothing else about ``y``."""

    n: int
    kind: str
    locations: tuple
    signs: tuple

    def items(self):
        return list(zip(self.locations, self.signs))


def selected_model(trace: PathTrace, k: int) -> SelectedModel1D:
    """Changepoints after ``k`` steps of a difference-penalty path."""
    order = {"diff1": 1, "diff2": 2}.get(trace.D.kind)
    if order is None:
        raise ContrastError(f"no 1d model for penalty kind {trace.D.kind!r}")
    if k == 0:
        return SelectedModel1D(trace.D.n, (), (), order)
    step = trace.steps[k - 1]
    pairs = sorted(zip(step.boundary, step.signs))
    return SelectedModel1D(trace.D.n, tuple(i + 1 for i, _ in pairs), tuple(s for _, s in pairs), order)


def fl_spike(model: SelectedModel1D, j: int) -> Contrast:
    """Difference of the two observations straddling the ``j``-th changepoint."""
    I, s = model._check(j)
    v = np.zeros(model.n)
    v[I] = s
    v[I - 1] = -s
    return Contrast(v, "spike", I, s)


def fl_segment(model: SelectedModel1D, j: int) -> Contrast:
    """Difference of the segment means on either side of the ``j``-th changepoint."""
    I, s = model._check(j)
    cps = (0,) + model.changepoints + (model.n,)
    left, right = cps[j - 1], cps[j + 1]
    v = np.zeros(model.n)
    v[left:I] = -1.0 / (I - left)
    v[I:right] = 1.0 / (right - I)
    return Contrast(s * v, "segment", I, s)


def tf_spike(model: SelectedModel1D, j: int) -> Contrast:
    """Second difference of the observations at the ``j``-th knot."""
    I, s = model._check(j)
    if I + 2 > model.n:
        raise ContrastError("knot too close to the right end")
    v = np.zeros(model.n)
    v[I - 1 : I + 2] = (1.0, -2.0, 1.0)
    return Contrast(s * v, "spike", I, s)


def tf_segment(model: SelectedModel1D, j: int, D: PenaltyMatrix) -> Contrast:
    """Projection contrast for the ``j``-th knot of a trend-filtering model.

    The direction spans the part of ``null(D_{-B})`` lost when the knot is
    removed from the boundary set, oriented so that its second difference
    at the knot has the sign of the knot.
    """
    I, s = model._check(j)
    rows = model.rows
    D_minusB = D.rows_except(rows)
    D_drop = D.rows_except([r for r in rows if r != I - 1])
    w = rank1_null_basis(D_minusB, D_drop, n=D.n)
    dd = float(D.dense[I - 1] @ w)
    if abs(dd) < 1e-12:
        raise ContrastError("second difference at the knot vanishes; cannot orient")
    v = np.sign(dd) * s * w
    return Contrast(v, "segment", I, s)


def graph_partition(D: PenaltyMatrix, boundary, signs) -> GraphPartition:
    """Components of the graph behind ``D`` once boundary edges are removed."""
    edges = D.meta.get("edges")
    if edges is None:
        raise ContrastError("penalty carries no edge list")
    boundary = tuple(int(b) for b in boundary)
    keep = [e for r, e in enumerate(edges) if r not in set(boundary)]
    if keep:
        ij = np.array(keep) - 1
        adj = csr_matrix((np.ones(len(keep)), (ij[:, 0], ij[:, 1])), shape=(D.n, D.n))
    else:
        adj = csr_matrix((D.n, D.n))
    _, labels = connected_components(adj, directed=False)
    return GraphPartition(D.n, labels, tuple(edges), dict(zip(boundary, (int(s) for s in signs))))


def graph_partition_at(trace: PathTrace, k: int) -> GraphPartition:
    step = trace.steps[k - 1] if k else None
    return graph_partition(trace.D, step.boundary if step else (), step.signs if step else ())


def gfl_segment(partition: GraphPartition, a: int, b: int) -> Contrast:
    """Mean over component ``b`` minus mean over component ``a``, signed.

    The sign is that of ``beta_b - beta_a`` implied by the boundary edges
    joining the two components; conflicting edges raise ``ContrastError``.
    """
    labels = partition.labels
    if a == b or not (0 <= a < partition.n_components and 0 <= b < partition.n_components):
        raise ContrastError("need two distinct existing components")
    votes = set()
    for row, (i, j) in enumerate(partition.edges):
        ci, cj = labels[i - 1], labels[j - 1]
        if {ci, cj} != {a, b}:
            continue
        if row not in partition.boundary:
            raise ContrastError("components joined by a non-boundary edge")
        s = partition.boundary[row]
        # row encodes beta_j - beta_i
        votes.add(s if (ci == a and cj == b) else -s)
    if not votes:
        raise ContrastError(f"components {a} and {b} are not neighbours")
    if len(votes) > 1:
        raise ContrastError("boundary edges between the components disagree in sign")
    s_ab = votes.pop()
    Ca, Cb = labels == a, labels == b
    v = np.zeros(partition.n)
    v[Ca] = -1.0 / Ca.sum()
    v[Cb] = 1.0 / Cb.sum()
    return Contrast(s_ab * v, "graph_segment", None, s_ab, {"components": (a, b)})


def _sorted_breaks(changepoints):
    return sorted((int(p), int(t)) for p, t in changepoints)


def effective_design(X, changepoints) -> np.ndarray:
    """Split each predictor column at its changepoints.

    ``changepoints`` holds ``(predictor, loc)`` pairs, 0-based predictor and
    1-based ``loc`` meaning the coefficient changes between rows ``loc`` and
    ``loc + 1``.  Columns are ordered predictor by predictor, segments left
    to right.
    """
    X = np.asarray(X, dtype=float)
    n, p = X.shape
    breaks = _sorted_breaks(changepoints)
    cols = []
    for j in range(p):
        locs = [t for q, t in breaks if q == j]
        if any(not 1 <= t <= n - 1 for t in locs):
            raise ContrastError("changepoint location outside 1..n-1")
        edges = [0] + locs + [n]
        for lo, hi in zip(edges[:-1], edges[1:]):
            c = np.zeros(n)
            c[lo:hi] = X[lo:hi, j]
            cols.append(c)
    return np.column_stack(cols)


def reg_segment(X, changepoints, j: int, sign: int) -> Contrast:
    """Segment contrast for the ``j``-th (1-based, sorted) regression changepoint."""
    X = np.asarray(X, dtype=float)
    breaks = _sorted_breaks(changepoints)
    if not 1 <= j <= len(breaks):
        raise ContrastError(f"j={j} outside 1..{len(breaks)}")
    XB = effective_design(X, breaks)
    if rank(XB) < XB.shape[1]:
        raise ContrastError("effective design is rank deficient")
    pred, loc = breaks[j - 1]
    # segment left of the break: one column per earlier block and earlier break
    col = pred + (j - 1)
    e = np.zeros(XB.shape[1])
    e[col], e[col + 1] = -1.0, 1.0
    v = sign * (np.linalg.pinv(XB, rcond=RANK_TOL).T @ e)
    return Contrast(v, "reg_segment", loc, int(sign), {"predictor": pred})


def likelihood_projection(X, changepoints, j: int) -> np.ndarray:
    """``P_col(X_B) - P_col(X_{B without j})``; the rank-one target of ``reg_segment``."""
    breaks = _sorted_breaks(changepoints)
    rest = breaks[: j - 1] + breaks[j:]
    return col_projector(effective_design(X, breaks)) - col_projector(effective_design(X, rest))


def declutter(model: SelectedModel1D, min_gap: int) -> SelectedModel1D:
    """Drop changepoints closer than ``min_gap`` to the last one kept."""
    if min_gap < 1:
        raise ValueError("min_gap must be at least 1")
    kept, signs = [], []
    for c, s in zip(model.changepoints, model.signs):
        if kept and c - kept[-1] < min_gap:
            continue
        kept.append(c)
        signs.append(s)
    return SelectedModel1D(model.n, tuple(kept), tuple(signs), model.order)


def step_sign_model(trace: PathTrace, k: int) -> StepSignModel:
    """Boundary locations (1-based rows) and signs after ``k`` steps."""
    if k < 0 or k > trace.n_steps:
        raise ValueError(f"k={k} outside 0..{trace.n_steps}")
    if k == 0:
        return StepSignModel(trace.D.n, trace.D.kind, (), ())
    step = trace.steps[k - 1]
    pairs = sorted(zip(step.boundary, step.signs))
    return StepSignModel(trace.D.n, trace.D.kind, tuple(i + 1 for i, _ in pairs), tuple(s for _, s in pairs))
