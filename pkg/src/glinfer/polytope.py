"""Half-space description of the data sets that produce a given path.

For a model sequence ``M_1, ..., M_k`` the set of ``y`` realizing it is a
cone ``{y : G y >= 0}``.  Every ratio comparison made by the path has a
denominator that depends only on the model, so clearing it gives a linear
row.  Rows are stored with unit norm; zero rows are dropped.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .path import DENOM_TOL, ModelStep, PathTrace, first_step_operator, leave_structure, step_operators
from .penalties import PenaltyMatrix

FAMILIES = (
    "first_hit",
    "hit_sign",
    "hit_argmax",
    "leave_sign_neg",
    "leave_sign_pos",
    "leave_argmax",
    "hit_vs_leave",
    "ic_pair",
)

ZERO_ROW = 1e-12


class ModelSequenceError(ValueError):
    """Consecutive steps are not related by a single hit or leave."""


@dataclass(frozen=True)
class Polyhedron:
    """The set ``{y : gamma @ y >= w}``.

    ``tags[i]`` is ``(step, family)`` for row ``i``.
    """

    gamma: np.ndarray
    w: np.ndarray
    tags: tuple

    @property
    def n_rows(self) -> int:
        return self.gamma.shape[0]

    @property
    def dim(self) -> int:
        return self.gamma.shape[1]

    def slack(self, y) -> np.ndarray:
        return self.gamma @ np.asarray(y, dtype=float) - self.w

    def stack(self, other: "Polyhedron") -> "Polyhedron":
        return Polyhedron(
            np.vstack([self.gamma, other.gamma]),
            np.concatenate([self.w, other.w]),
            self.tags + other.tags,
        )

    def pullback(self, H) -> "Polyhedron":
        """Express the set in ``y`` when the polyhedron constrains ``H @ y``."""
        return _make(self.gamma @ np.asarray(H, dtype=float), self.w, self.tags)

    def count(self, step=None, family=None) -> int:
        return sum(
            1 for s, f in self.tags if (step is None or s == step) and (family is None or f == family)
        )

    def to_dict(self) -> dict:
        return {
            "n": self.dim,
            "rows": self.gamma.tolist(),
            "w": self.w.tolist(),
            "tags": [{"step": s, "family": f} for s, f in self.tags],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, obj: dict) -> "Polyhedron":
        n = int(obj["n"])
        gamma = np.asarray(obj["rows"], dtype=float).reshape(-1, n)
        w = np.asarray(obj["w"], dtype=float)
        tags = tuple((int(t["step"]), str(t["family"])) for t in obj["tags"])
        return cls(gamma, w, tags)

    @classmethod
    def empty(cls, n: int) -> "Polyhedron":
        return cls(np.zeros((0, n)), np.zeros(0), ())


def _make(rows, w, tags, normalize=True) -> Polyhedron:
    rows = np.asarray(rows, dtype=float).reshape(len(tags), -1) if len(tags) else np.asarray(rows, dtype=float)
    w = np.asarray(w, dtype=float)
    if rows.shape[0] == 0:
        return Polyhedron(rows.reshape(0, rows.shape[-1] if rows.ndim == 2 else 0), w.reshape(0), ())
    norms = np.linalg.norm(rows, axis=1)
    keep = norms > ZERO_ROW * max(norms.max(), 1e-300)
    rows, w, norms = rows[keep], w[keep], norms[keep]
    tags = tuple(t for t, k in zip(tags, keep) if k)
    if normalize:
        rows = rows / norms[:, None]
        w = w / norms
    return Polyhedron(rows, w, tags)


def gamma_first_step(step: ModelStep, D: PenaltyMatrix, normalize: bool = True) -> Polyhedron:
    """Rows ``r1 M_{i1} - M_i`` and ``r1 M_{i1} + M_i`` for every ``i != i1``."""
    M = first_step_operator(D)
    i1, r1 = step.boundary[0], step.signs[0]
    top = r1 * M[i1]
    others = np.delete(M, i1, axis=0)
    rows = np.empty((2 * others.shape[0], D.n))
    rows[0::2] = top - others
    rows[1::2] = top + others
    tags = ((1, "first_hit"),) * rows.shape[0]
    return _make(rows, np.zeros(rows.shape[0]), tags, normalize)


def _check_transition(prev: ModelStep, nxt: ModelStep):
    before, after = set(prev.boundary), set(nxt.boundary)
    if nxt.action == "hit":
        ok = after - before == {nxt.coord} and before <= after and len(after) == len(before) + 1
    elif nxt.action == "leave":
        ok = before - after == {nxt.coord} and after <= before and len(after) == len(before) - 1
    else:
        ok = False
    if not ok:
        raise ModelSequenceError(f"step {nxt.k} does not follow from step {prev.k} by one {nxt.action}")


def transition_rows(prev: ModelStep, nxt: ModelStep, D: PenaltyMatrix):
    """Unnormalized rows and tags encoding step ``nxt`` given ``prev``."""
    _check_transition(prev, nxt)
    ops = step_operators(D, prev.boundary, prev.signs)
    k = nxt.k
    rows, tags = [], []

    # viable hitting signs
    r_map = dict(nxt.hit_signs)
    r = np.array([r_map.get(int(i), 0) for i in ops.comp], dtype=float)
    live = r != 0
    for j in np.flatnonzero(live):
        rows.append(r[j] * ops.Pm[j])
        tags.append((k, "hit_sign"))
    denom = 1.0 + r * ops.b
    valid = live & (denom > DENOM_TOL)
    T = np.zeros_like(ops.Pm)
    T[valid] = (r[valid] / denom[valid])[:, None] * ops.Pm[valid]

    # viable leaving coordinates
    exclude = prev.coord if prev.action == "hit" else None
    dneg, _, _ = leave_structure(ops, np.zeros(len(ops.boundary)), exclude=exclude)
    leave_set = set(nxt.leave_coords)
    viable = np.array([dneg[j] and ops.boundary[j] in leave_set for j in range(len(ops.boundary))], dtype=bool)
    if any(c not in ops.boundary for c in leave_set) or np.any(viable & ~dneg):
        raise ModelSequenceError("leave coordinates outside the boundary set")
    for j in np.flatnonzero(dneg):
        if viable[j]:
            rows.append(-ops.C[j])
            tags.append((k, "leave_sign_neg"))
        else:
            rows.append(ops.C[j])
            tags.append((k, "leave_sign_pos"))
    L = np.zeros_like(ops.C)
    L[viable] = ops.C[viable] / ops.d[viable][:, None]

    if nxt.action == "hit":
        h = int(np.flatnonzero(ops.comp == nxt.coord)[0])
        if not valid[h] or r[h] != nxt.sign:
            raise ModelSequenceError("hitting coordinate is not a viable candidate")
        for j in np.flatnonzero(valid):
            if j != h:
                rows.append(T[h] - T[j])
                tags.append((k, "hit_argmax"))
        for j in np.flatnonzero(viable):
            rows.append(T[h] - L[j])
            tags.append((k, "hit_vs_leave"))
    else:
        l = ops.boundary.index(nxt.coord)
        if not viable[l]:
            raise ModelSequenceError("leaving coordinate is not viable")
        for j in np.flatnonzero(viable):
            if j != l:
                rows.append(L[l] - L[j])
                tags.append((k, "leave_argmax"))
        for j in np.flatnonzero(valid):
            rows.append(L[l] - T[j])
            tags.append((k, "hit_vs_leave"))
    return rows, tags


def gamma_extend(P: Polyhedron, prev: ModelStep, nxt: ModelStep, D: PenaltyMatrix, normalize: bool = True) -> Polyhedron:
    """Append the rows for step ``nxt`` to ``P``."""
    rows, tags = transition_rows(prev, nxt, D)
    if not rows:
        return P
    extra = _make(np.array(rows), np.zeros(len(rows)), tuple(tags), normalize)
    return P.stack(extra)


def selection_polyhedron(steps, D: PenaltyMatrix, normalize: bool = True) -> Polyhedron:
    """Polyhedron of a model sequence given as a list of steps."""
    steps = list(steps)
    if not steps:
        raise ValueError("empty model sequence")
    P = gamma_first_step(steps[0], D, normalize)
    for prev, nxt in zip(steps[:-1], steps[1:]):
        P = gamma_extend(P, prev, nxt, D, normalize)
    return P


def build_selection_polyhedron(trace: PathTrace, k: int, normalize: bool = True) -> Polyhedron:
    """Polyhedron of the first ``k`` steps of ``trace``."""
    if not 1 <= k <= trace.n_steps:
        raise ValueError(f"k={k} outside 1..{trace.n_steps}")
    return selection_polyhedron(trace.steps[:k], trace.D, normalize)


def membership(P: Polyhedron, y, tol: float = 1e-8) -> bool:
    if P.n_rows == 0:
        return True
    return bool(np.min(P.slack(y)) >= -tol)


def row_bound(m: int, k: int) -> int:
    return (2 * m + 1) * k
