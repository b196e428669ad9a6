"""Dual path algorithm for the generalized lasso signal approximator.

The path tracks the dual solution ``u(lambda)`` of

    min_u ||y - D^T u||^2  subject to  ||u||_inf <= lambda

as ``lambda`` decreases from infinity to zero.  Between knots ``u`` is
affine in ``lambda`` and the primal solution follows from
``beta = y - D^T u``.

Row indices of ``D`` are 0-based throughout this module.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

from .linalg import RANK_TOL
from .penalties import PenaltyMatrix

TIE_TOL = 1e-12
DENOM_TOL = 1e-12
ZERO_KNOT = 1e-12
LEAVE_TOL = 1e-10
CACHE_SIZE = 4096


@dataclass(frozen=True)
class ModelStep:
    """The model after ``k`` steps of the path.

    Attributes
    ----------
    k : int
        1-based step number.
    boundary, signs : tuple of int
        Boundary set in order of entry and its dual signs.
    hit_signs : tuple of (int, int)
        Viable hitting sign of every coordinate outside the previous boundary
        set.  Empty at step 1.
    leave_coords : tuple of int
        Viable leaving coordinates. Empty at step 1.
    action : {"hit", "leave"}
    coord, sign : int
        Coordinate that joined or left, and its sign.
    knot : float
        ``lambda_k``.
    """

    k: int
    boundary: tuple
    signs: tuple
    hit_signs: tuple
    leave_coords: tuple
    action: str
    coord: int
    sign: int
    knot: float

    def key(self):
        """Hashable summary used to compare model sequences across data sets."""
        return (
            self.action,
            self.coord,
            self.sign,
            tuple(sorted(zip(self.boundary, self.signs))),
            self.hit_signs,
            self.leave_coords,
        )

    def sign_map(self) -> dict:
        return dict(zip(self.boundary, self.signs))


@dataclass(frozen=True)
class StepOperators:
    """y-free quantities for the transition out of boundary set ``B``.

    ``comp`` holds the interior rows (sorted).  ``Pm`` satisfies
    ``a = Pm @ y``; ``b = Pm @ D_B^T s``.  ``C @ y`` gives the leave
    numerators ``c`` and ``d`` the leave denominators, both aligned with
    ``boundary``.
    """

    boundary: tuple
    signs: tuple
    comp: np.ndarray
    Pm: np.ndarray
    b: np.ndarray
    C: np.ndarray
    d: np.ndarray
    P_null: np.ndarray
    null_dim: int
    leave_scale: float


@dataclass(frozen=True)
class Transition:
    """Result of one ``advance`` call."""

    ops: StepOperators
    a: np.ndarray
    hit_signs: np.ndarray
    hit_times: np.ndarray
    hit_valid: np.ndarray
    c: np.ndarray
    leave_viable: np.ndarray
    leave_times: np.ndarray
    lam_hit: float
    lam_leave: float
    next_knot: float
    step: ModelStep | None


@dataclass(frozen=True)
class PathTrace:
    """Knots, model sequence and dual segments of a computed path.

    ``knots`` has one more entry than ``steps``: ``knots[k]`` ends the
    segment on which ``steps[k-1]`` is active.  ``segments[k]`` holds full
    m-vectors ``(a, b)`` with ``u(lambda) = a - lambda * b`` on
    ``[knots[k+1], knots[k]]``.
    """

    y: np.ndarray
    D: PenaltyMatrix
    u0: np.ndarray
    steps: tuple
    knots: np.ndarray
    segments: tuple
    degenerate: bool = False
    complete: bool = False
    transitions: tuple = field(default=(), repr=False, compare=False)

    @property
    def n_steps(self) -> int:
        return len(self.steps)

    def boundary(self, k: int) -> tuple:
        return self.steps[k - 1].boundary if k > 0 else ()

    def signs(self, k: int) -> tuple:
        return self.steps[k - 1].signs if k > 0 else ()

    def keys(self, k: int | None = None) -> tuple:
        k = self.n_steps if k is None else k
        return tuple(s.key() for s in self.steps[:k])

    def dual_at(self, lam: float) -> np.ndarray:
        if lam < 0:
            raise ValueError("lambda must be nonnegative")
        if self.degenerate or lam >= self.knots[0]:
            return self.u0.copy()
        k = _segment_index(self.knots, lam)
        a, b = self.segments[k]
        return a - lam * b


def _segment_index(knots, lam):
    # steps[k] is active on [knots[k+1], knots[k]]
    K = len(knots) - 1
    for k in range(K):
        if lam >= knots[k + 1]:
            return k
    return K - 1


def _lru(D: PenaltyMatrix, name: str):
    cache = D._cache.get(name)
    if cache is None:
        cache = OrderedDict()
        D._cache[name] = cache
    return cache


def first_step_operator(D: PenaltyMatrix) -> np.ndarray:
    """``M = (D D^T)^+ D``, the map from ``y`` to the unconstrained dual."""
    M = D._cache.get("M")
    if M is None:
        U, s, Vt = np.linalg.svd(D.dense.T, full_matrices=False)
        r = int(np.sum(s > RANK_TOL * s[0])) if s.size and s[0] > 0 else 0
        M = (U[:, :r] / s[:r]) @ Vt[:r]
        M = M.T.copy()
        M.setflags(write=False)
        D._cache["M"] = M
    return M


def _interior_factors(D: PenaltyMatrix, boundary: frozenset):
    cache = _lru(D, "interior")
    key = boundary
    hit = cache.get(key)
    if hit is not None:
        cache.move_to_end(key)
        return hit
    keep = np.ones(D.m, dtype=bool)
    keep[list(boundary)] = False
    comp = np.flatnonzero(keep)
    DmB = D.dense[comp]
    n = D.n
    if comp.size:
        U, s, Vt = np.linalg.svd(DmB, full_matrices=False)
        r = int(np.sum(s > RANK_TOL * s[0])) if s.size and s[0] > 0 else 0
        U, s, Vt = U[:, :r], s[:r], Vt[:r]
        Pm = (U / s) @ Vt
        P_null = np.eye(n) - Vt.T @ Vt
    else:
        r = 0
        Pm = np.zeros((0, n))
        P_null = np.eye(n)
    out = (comp, Pm, P_null, n - r)
    cache[key] = out
    if len(cache) > CACHE_SIZE:
        cache.popitem(last=False)
    return out


def step_operators(D: PenaltyMatrix, boundary, signs) -> StepOperators:
    """Assemble the y-free transition operators for ``(B, s)``."""
    boundary = tuple(int(i) for i in boundary)
    signs = tuple(int(s) for s in signs)
    comp, Pm, P_null, null_dim = _interior_factors(D, frozenset(boundary))
    DB = D.dense[list(boundary)] if boundary else np.zeros((0, D.n))
    s = np.asarray(signs, dtype=float)
    g = DB.T @ s
    b = Pm @ g
    C = s[:, None] * (DB @ P_null)
    d = C @ g
    # D_B^T s - D_{-B}^T b = P_null D_B^T s, so d_i = s_i D_i P_null D_B^T s
    row_sq = float(np.mean(np.sum(D.dense**2, axis=1)))
    return StepOperators(
        boundary=boundary,
        signs=signs,
        comp=comp,
        Pm=Pm,
        b=b,
        C=C,
        d=d,
        P_null=P_null,
        null_dim=null_dim,
        leave_scale=row_sq * max(1, len(boundary)),
    )


def _first_argmax(values, top):
    """Smallest index whose value is within relative TIE_TOL of ``top``."""
    thresh = top - TIE_TOL * max(abs(top), 1e-300)
    return int(np.flatnonzero(values >= thresh)[0])


def _norm(y) -> float:
    # rescale first so tiny inputs do not underflow to zero
    top = float(np.abs(y).max()) if y.size else 0.0
    return top * float(np.linalg.norm(y / top)) if top > 0 else 0.0


def initial_step(y, D: PenaltyMatrix):
    """First hitting time, coordinate and sign.

    Returns ``(step, u0)``; ``step`` is ``None`` when ``u0`` vanishes.
    """
    y = np.asarray(y, dtype=float)
    M = first_step_operator(D)
    u0 = M @ y
    absu = np.abs(u0)
    lam1 = float(absu.max()) if absu.size else 0.0
    scale = _norm(y)
    if lam1 <= 1e-12 * scale or lam1 == 0.0:
        return None, u0
    i1 = _first_argmax(absu, lam1)
    r1 = 1 if u0[i1] > 0 else -1
    step = ModelStep(
        k=1,
        boundary=(i1,),
        signs=(r1,),
        hit_signs=(),
        leave_coords=(),
        action="hit",
        coord=i1,
        sign=r1,
        knot=lam1,
    )
    return step, u0


def hit_structure(ops: StepOperators, a: np.ndarray):
    """Viable hitting signs, times and which candidates count.

    Rows of ``Pm`` that vanish are never candidates and get sign 0.
    """
    Pm = ops.Pm
    if Pm.shape[0] == 0:
        z = np.zeros(0)
        return z.astype(int), z, z.astype(bool)
    norms = np.linalg.norm(Pm, axis=1)
    live = norms > RANK_TOL * max(norms.max(), 1e-300)
    r = np.where(a >= 0, 1, -1)
    r = np.where(live, r, 0)
    denom = 1.0 + r * ops.b
    valid = live & (denom > DENOM_TOL)
    times = np.where(valid, r * a / np.where(valid, denom, 1.0), 0.0)
    times = np.maximum(times, 0.0)
    return r, times, valid


def leave_structure(ops: StepOperators, c: np.ndarray, exclude=None):
    """Deterministic set ``d_i < 0``, viable set and leave times."""
    d = ops.d
    dneg = d < -LEAVE_TOL * ops.leave_scale
    if exclude is not None:
        dneg = dneg & (np.asarray(ops.boundary) != exclude)
    viable = dneg & (c <= 0)
    times = np.where(viable, c / np.where(dneg, d, -1.0), 0.0)
    return dneg, viable, times


def diagonally_dominant(D: PenaltyMatrix) -> bool:
    """Whether ``D D^T`` is (weakly) diagonally dominant, so no coordinate ever leaves."""
    G = abs(D.matrix @ D.matrix.T).tocsr()
    diag = G.diagonal()
    off = np.asarray(G.sum(axis=1)).ravel() - diag
    return bool(np.all(diag >= off - 1e-12 * diag))


def advance(D: PenaltyMatrix, y, step: ModelStep, lam1: float | None = None, skip_leave: bool = False) -> Transition:
    """Compute the segment after ``step`` and the next model step.

    ``Transition.step`` is ``None`` when the next knot is zero, judged
    relative to the first knot ``lam1`` (defaults to ``step.knot``).
    ``skip_leave`` drops the leave computation; only valid when
    ``diagonally_dominant(D)`` holds.
    """
    y = np.asarray(y, dtype=float)
    lam_k = step.knot
    ops = step_operators(D, step.boundary, step.signs)
    a = ops.Pm @ y
    # rounding noise must not decide a hitting sign
    a[np.abs(a) <= ZERO_KNOT * _norm(y) * np.linalg.norm(ops.Pm, axis=1)] = 0.0
    r, hit_times, hit_valid = hit_structure(ops, a)
    hit_times = np.minimum(hit_times, lam_k)
    if skip_leave:
        c = np.zeros(len(ops.boundary))
        viable = np.zeros(len(ops.boundary), dtype=bool)
        leave_times = np.zeros(len(ops.boundary))
    else:
        c = ops.C @ y
        # a coordinate that just joined cannot leave at the same knot
        just_hit = step.coord if step.action == "hit" else None
        _, viable, leave_times = leave_structure(ops, c, exclude=just_hit)
        leave_times = np.minimum(leave_times, lam_k)

    lam_hit = float(hit_times[hit_valid].max()) if hit_valid.any() else 0.0
    lam_leave = float(leave_times[viable].max()) if viable.any() else 0.0
    next_knot = max(lam_hit, lam_leave)

    new_step = None
    if next_knot > ZERO_KNOT * (step.knot if lam1 is None else lam1):
        hit_sign_pairs = tuple((int(ops.comp[j]), int(r[j])) for j in range(ops.comp.size) if r[j] != 0)
        leave_coords = tuple(int(ops.boundary[j]) for j in np.flatnonzero(viable))
        if lam_hit >= lam_leave:
            cand = np.where(hit_valid, hit_times, -np.inf)
            j = _first_argmax(cand, lam_hit)
            coord, sgn = int(ops.comp[j]), int(r[j])
            boundary = step.boundary + (coord,)
            signs = step.signs + (sgn,)
            action = "hit"
        else:
            cand = np.where(viable, leave_times, -np.inf)
            j = _first_argmax(cand, lam_leave)
            coord, sgn = int(ops.boundary[j]), int(ops.signs[j])
            boundary = step.boundary[:j] + step.boundary[j + 1:]
            signs = step.signs[:j] + step.signs[j + 1:]
            action = "leave"
        new_step = ModelStep(
            k=step.k + 1,
            boundary=boundary,
            signs=signs,
            hit_signs=hit_sign_pairs,
            leave_coords=leave_coords,
            action=action,
            coord=coord,
            sign=sgn,
            knot=next_knot,
        )
    return Transition(
        ops=ops,
        a=a,
        hit_signs=r,
        hit_times=hit_times,
        hit_valid=hit_valid,
        c=c,
        leave_viable=viable,
        leave_times=leave_times,
        lam_hit=lam_hit,
        lam_leave=lam_leave,
        next_knot=next_knot if new_step is not None else 0.0,
        step=new_step,
    )


def _full_segment(D: PenaltyMatrix, tr: Transition):
    a_full = np.zeros(D.m)
    b_full = np.zeros(D.m)
    a_full[tr.ops.comp] = tr.a
    b_full[tr.ops.comp] = tr.ops.b
    if tr.ops.boundary:
        b_full[list(tr.ops.boundary)] = -np.asarray(tr.ops.signs, dtype=float)
    return a_full, b_full


def run_path(y, D: PenaltyMatrix, max_steps: int | None = None, skip_leave: bool = False) -> PathTrace:
    """Run the dual path for up to ``max_steps`` steps.

    The knot following the last recorded step is always computed, so that
    every step has a closed segment.  ``skip_leave=True`` is an opt-in fast
    path for penalties with diagonally dominant ``D D^T`` (checked).
    """
    if skip_leave and not diagonally_dominant(D):
        raise ValueError("skip_leave requires D D^T to be diagonally dominant")
    y = np.asarray(y, dtype=float).copy()
    if y.shape != (D.n,):
        raise ValueError(f"y has shape {y.shape}, expected ({D.n},)")
    if max_steps is None:
        max_steps = min(D.m, 5 * D.n)
    if max_steps < 1:
        raise ValueError("max_steps must be at least 1")
    step, u0 = initial_step(y, D)
    y.setflags(write=False)
    if step is None:
        return PathTrace(y=y, D=D, u0=u0, steps=(), knots=np.array([0.0]), segments=(), degenerate=True, complete=True)
    lam1 = step.knot
    steps = [step]
    knots = [lam1]
    segments = []
    transitions = []
    complete = False
    while True:
        tr = advance(D, y, step, lam1, skip_leave)
        transitions.append(tr)
        segments.append(_full_segment(D, tr))
        knots.append(tr.next_knot)
        if tr.step is None:
            complete = True
            break
        if len(steps) >= max_steps:
            break
        step = tr.step
        steps.append(step)
    return PathTrace(
        y=y,
        D=D,
        u0=u0,
        steps=tuple(steps),
        knots=np.asarray(knots),
        segments=tuple(segments),
        complete=complete,
        transitions=tuple(transitions),
    )


def primal_at(trace: PathTrace, lam: float) -> np.ndarray:
    """Primal solution ``beta(lambda)`` on the computed path."""
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    if not trace.complete and lam < trace.knots[-1]:
        raise ValueError("lambda lies beyond the computed part of the path")
    u = trace.dual_at(lam)
    return trace.y - trace.D.matrix.T @ u


def primal_projection(trace: PathTrace, k: int, lam: float) -> np.ndarray:
    """``P_null(D_{-B_k}) (y - lam D_{B_k}^T s)``; the closed form for step ``k``."""
    step = trace.steps[k - 1]
    ops = step_operators(trace.D, step.boundary, step.signs)
    DB = trace.D.rows(step.boundary)
    return ops.P_null @ (trace.y - lam * DB.T @ np.asarray(step.signs, dtype=float))


def kkt_check(y, D: PenaltyMatrix, lam: float, beta, u, tol: float = 1e-9) -> float:
    """Largest violation of the primal-dual optimality conditions."""
    y = np.asarray(y, dtype=float)
    beta = np.asarray(beta, dtype=float)
    u = np.asarray(u, dtype=float)
    stationarity = np.max(np.abs(beta - (y - D.matrix.T @ u)), initial=0.0)
    box = max(0.0, float(np.max(np.abs(u), initial=0.0) - lam))
    Db = D.matrix @ beta
    scale = max(1.0, float(np.max(np.abs(y), initial=0.0)))
    active = np.abs(Db) > tol * scale
    sign_gap = np.max(np.abs(u[active] - lam * np.sign(Db[active])), initial=0.0)
    return float(max(stationarity, box, sign_gap))


def trace_to_dict(trace: PathTrace) -> dict:
    """JSON-ready description; boundary rows and coordinates are 1-indexed."""
    return {
        "n": trace.D.n,
        "m": trace.D.m,
        "kind": trace.D.kind,
        "y": trace.y.tolist(),
        "knots": trace.knots.tolist(),
        "degenerate": trace.degenerate,
        "complete": trace.complete,
        "steps": [
            {
                "k": s.k,
                "action": s.action,
                "coord": s.coord + 1,
                "sign": s.sign,
                "knot": s.knot,
                "boundary": [i + 1 for i in s.boundary],
                "signs": list(s.signs),
                "hit_signs": [[i + 1, r] for i, r in s.hit_signs],
                "leave_coords": [i + 1 for i in s.leave_coords],
            }
            for s in trace.steps
        ],
        "segments": [{"a": a.tolist(), "b": b.tolist()} for a, b in trace.segments],
    }
