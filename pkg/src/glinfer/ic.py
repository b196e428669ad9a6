"""Information-criterion stopping along the path.

The criterion at step ``k`` is the residual sum of squares of the
unshrunken fit ``P_null(D_{-B_k}) y`` plus a complexity penalty on the
nullity.  The path stops at the first candidate step followed by ``q``
successive rises of the criterion; every comparison is a condition on a
single coordinate ``a^T y``, so the stopping event is a polyhedron.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from .linalg import CodimensionError, RANK_TOL
from .path import PathTrace, step_operators
from .polytope import Polyhedron, build_selection_polyhedron

PENALTIES = ("aic", "bic", "ebic")


@dataclass(frozen=True)
class ICConfig:
    """Penalty family, rise count ``q``, noise variance and EBIC ``gamma``."""

    penalty: str = "bic"
    q: int = 2
    sigma2: float = 1.0
    gamma: float = 0.5

    def __post_init__(self):
        if self.penalty not in PENALTIES:
            raise ValueError(f"penalty must be one of {PENALTIES}")
        if self.q < 1:
            raise ValueError("q must be positive")
        if self.sigma2 < 0:
            raise ValueError("sigma2 must be nonnegative")
        if self.penalty == "ebic" and not 0 < self.gamma < 1:
            raise ValueError("gamma must lie in (0, 1)")

    def complexity(self, d, n: int):
        d = np.asarray(d, dtype=float)
        if self.penalty == "aic":
            out = 2.0 * self.sigma2 * d
        elif self.penalty == "bic":
            out = self.sigma2 * d * np.log(n)
        else:
            log_binom = gammaln(n + 1) - gammaln(d + 1) - gammaln(n - d + 1)
            out = self.sigma2 * (d * np.log(n) + 2.0 * self.gamma * log_binom)
        return out


@dataclass(frozen=True)
class ICPair:
    """Comparison between candidates ``lo`` and ``hi`` (1-based steps).

    ``a`` spans the one-dimensional difference of the two null spaces and
    ``b = |P_n(d_hi) - P_n(d_lo)|``.  ``grows`` is true when the later
    candidate has the larger null space; ``rise`` records the realized
    direction and ``side`` the observed sign of ``a^T y``.
    """

    lo: int
    hi: int
    a: np.ndarray
    b: float
    grows: bool
    rise: bool
    side: int

    def convex(self) -> bool:
        """Whether the realized comparison is the slab ``|a^T y| <= sqrt(b)``."""
        return self.rise == self.grows


@dataclass(frozen=True)
class ICTrace:
    candidates: tuple
    nullities: tuple
    values: tuple
    rises: tuple
    khat: int | None
    jhat: int | None
    pairs: tuple = field(default=(), repr=False)
    config: ICConfig = ICConfig()

    def signature(self):
        """Everything the conditioning event fixes, for equivalence checks."""
        if self.jhat is None:
            return None
        last = self.jhat + self.config.q
        return (
            self.candidates[: last + 1],
            self.khat,
            self.rises[:last],
            tuple(p.side for p in self.pairs[:last] if not p.convex()),
        )


def _null_proj(trace: PathTrace, k: int):
    step = trace.steps[k - 1]
    ops = step_operators(trace.D, step.boundary, step.signs)
    return ops.P_null, ops.null_dim


def ic_value(y, trace: PathTrace, k: int, cfg: ICConfig) -> float:
    """Criterion value at step ``k`` (1-based)."""
    if not 1 <= k <= trace.n_steps:
        raise ValueError(f"k={k} outside 1..{trace.n_steps}")
    y = np.asarray(y, dtype=float)
    P, d = _null_proj(trace, k)
    resid = y - P @ y
    return float(resid @ resid + cfg.complexity(d, trace.D.n))


def candidate_steps(trace: PathTrace, tol: float = RANK_TOL) -> tuple:
    """Step 1 plus every step whose null space differs from its predecessor's."""
    if trace.n_steps == 0:
        return ()
    out = [1]
    P_prev, d_prev = _null_proj(trace, 1)
    for k in range(2, trace.n_steps + 1):
        P, d = _null_proj(trace, k)
        if d != d_prev or np.max(np.abs(P - P_prev)) > tol * max(1.0, np.sqrt(trace.D.n)):
            out.append(k)
        P_prev, d_prev = P, d
    return tuple(out)


def _pair(trace, lo, hi, y, cfg, rise):
    P_lo, d_lo = _null_proj(trace, lo)
    P_hi, d_hi = _null_proj(trace, hi)
    if abs(d_hi - d_lo) != 1:
        raise CodimensionError(f"candidates {lo} and {hi} differ by {abs(d_hi - d_lo)} dimensions")
    grows = d_hi > d_lo
    diff = P_hi - P_lo if grows else P_lo - P_hi
    evals, evecs = np.linalg.eigh((diff + diff.T) / 2)
    if abs(evals[-1] - 1.0) > 1e-6 or abs(evals[:-1]).max(initial=0.0) > 1e-6:
        raise CodimensionError(f"null spaces at steps {lo} and {hi} are not nested")
    a = evecs[:, -1]
    n = trace.D.n
    b = float(abs(cfg.complexity(d_hi, n) - cfg.complexity(d_lo, n)))
    side = 1 if a @ y >= 0 else -1
    return ICPair(lo=lo, hi=hi, a=a, b=b, grows=grows, rise=rise, side=side)


def first_run(rises, q: int):
    """Smallest ``j`` with ``rises[j:j+q]`` all true, else ``None``."""
    run = 0
    for i, r in enumerate(rises):
        run = run + 1 if r else 0
        if run >= q:
            return i - q + 1
    return None


def stop_rule(y, trace: PathTrace, cfg: ICConfig) -> ICTrace:
    """Apply the q-rise rule to the computed part of ``trace``.

    ``khat`` is ``None`` when no run of ``q`` rises occurs among the computed
    candidates, in which case the path should be extended.
    """
    y = np.asarray(y, dtype=float)
    cands = candidate_steps(trace)
    vals = tuple(ic_value(y, trace, k, cfg) for k in cands)
    nulls = tuple(_null_proj(trace, k)[1] for k in cands)
    rises = tuple(bool(vals[i + 1] > vals[i]) for i in range(len(vals) - 1))
    j = first_run(rises, cfg.q)
    pairs = ()
    if j is not None:
        pairs = tuple(_pair(trace, cands[i], cands[i + 1], y, cfg, rises[i]) for i in range(j + cfg.q))
    return ICTrace(
        candidates=cands,
        nullities=nulls,
        values=vals,
        rises=rises,
        khat=None if j is None else cands[j],
        jhat=j,
        pairs=pairs,
        config=cfg,
    )


def ic_polyhedron(ictrace: ICTrace, n: int) -> Polyhedron:
    """Rows fixing every comparison up to and including the stopping run.

    Slab comparisons give two rows ``+-a^T y >= -sqrt(b)``.  The complement
    ``|a^T y| >= sqrt(b)`` is not convex, so it is conditioned further on
    the observed side of ``a^T y``, giving one row.
    """
    if ictrace.khat is None:
        raise ValueError("the stopping rule did not select a step")
    rows, w, tags = [], [], []
    for p in ictrace.pairs:
        root = np.sqrt(p.b)
        if p.convex():
            rows += [p.a, -p.a]
            w += [-root, -root]
            tags += [(p.hi, "ic_pair")] * 2
        else:
            rows.append(p.side * p.a)
            w.append(root)
            tags.append((p.hi, "ic_pair"))
    return Polyhedron(np.array(rows).reshape(-1, n), np.array(w, dtype=float), tuple(tags))


def ic_selection_polyhedron(y, trace: PathTrace, cfg: ICConfig):
    """Path event through ``k_{j+q}`` intersected with the IC comparisons.

    Returns ``(polyhedron, ictrace)``.
    """
    ictrace = stop_rule(y, trace, cfg)
    if ictrace.khat is None:
        raise ValueError("the stopping rule did not select a step; extend the path")
    last = ictrace.candidates[ictrace.jhat + cfg.q]
    P = build_selection_polyhedron(trace, last)
    return P.stack(ic_polyhedron(ictrace, trace.D.n)), ictrace
