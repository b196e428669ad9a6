"""Truncated Gaussian pivots for linear contrasts of a polyhedral event.

Given ``y ~ N(theta, sigma^2 I)`` restricted to ``{Gamma y >= w}``, the
statistic ``v^T y`` is a Gaussian truncated to ``[vlo, vup]`` where the
limits depend on ``y`` only through a part independent of ``v^T y``.
Evaluating its CDF is the whole game; all tail ratios are formed in log
space with ``scipy.special.log_ndtr`` so that truncation sets tens of
standard deviations away from the mean are handled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import log_ndtr, ndtri

from .polytope import Polyhedron

CONTRAST_KINDS = ("spike", "segment", "graph_segment", "reg_segment", "custom")


class InfeasibleError(ValueError):
    """The observed data do not satisfy the conditioning polyhedron."""


class BracketError(RuntimeError):
    """Interval inversion could not bracket a root."""


@dataclass(frozen=True)
class Contrast:
    """Contrast vector with its provenance.

    ``location`` is 1-based (a changepoint ``I`` or a graph edge index).
    """

    v: np.ndarray
    kind: str = "custom"
    location: int | None = None
    sign: int = 1
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        v = np.asarray(self.v, dtype=float)
        if not np.linalg.norm(v) > 0:
            raise ValueError("contrast vector must be nonzero")
        if self.kind not in CONTRAST_KINDS:
            raise ValueError(f"unknown contrast kind {self.kind!r}")
        object.__setattr__(self, "v", v)


@dataclass(frozen=True)
class TGResult:
    stat: float
    vlo: float
    vup: float
    sd: float
    p_one: float
    p_two: float
    ci: tuple | None = None
    alpha: float | None = None
    degenerate: bool = False

    def to_dict(self) -> dict:
        def num(x):
            # infinite limits survive as JSON Infinity; NaN becomes null
            return None if x is None or math.isnan(x) else float(x)

        return {
            "stat": num(self.stat),
            "vlo": num(self.vlo),
            "vup": num(self.vup),
            "p_one": num(self.p_one),
            "p_two": num(self.p_two),
            "ci": None if self.ci is None else [num(self.ci[0]), num(self.ci[1])],
            "alpha": self.alpha,
            "degenerate": self.degenerate,
        }


def truncation_limits(P: Polyhedron, v, y, tol: float = 1e-8):
    """``(vlo, vup)`` for ``v^T y`` given the event ``P``."""
    v = np.asarray(v, dtype=float)
    y = np.asarray(y, dtype=float)
    stat = float(v @ y)
    if P.n_rows == 0:
        return -math.inf, math.inf
    slack = P.slack(y)
    row_norm = np.linalg.norm(P.gamma, axis=1)
    scale = max(1.0, float(np.linalg.norm(y)))
    if np.any(slack < -tol * scale * row_norm):
        raise InfeasibleError(f"y violates the polyhedron by {-slack.min():.3g}")
    slack = np.maximum(slack, 0.0)
    vv = float(v @ v)
    rho = P.gamma @ v / vv
    live = np.abs(rho) > 1e-12 * row_norm / math.sqrt(vv)
    pos = live & (rho > 0)
    neg = live & (rho < 0)
    vlo = stat - float(np.min(slack[pos] / rho[pos])) if pos.any() else -math.inf
    vup = stat - float(np.max(slack[neg] / rho[neg])) if neg.any() else math.inf
    return vlo, vup


def _cdf_std(z, a, b):
    """CDF at ``z`` of a standard normal truncated to ``[a, b]``; ``a < b``."""
    if z <= a:
        return 0.0
    if z >= b:
        return 1.0
    if a > 0:
        # right tail: work with survival functions Phi(-t)
        la, lz, lb = log_ndtr(-a), log_ndtr(-z), log_ndtr(-b)
        den = math.expm1(lb - la)
        if den == 0.0:
            return math.nan
        out = math.expm1(lz - la) / den
    else:
        la, lz, lb = log_ndtr(a), log_ndtr(z), log_ndtr(b)
        den = -math.expm1(la - lb)
        if den == 0.0:
            return math.nan
        out = math.exp(lz - lb) * -math.expm1(la - lz) / den
    return min(1.0, max(0.0, out))


def _sf_std(z, a, b):
    return _cdf_std(-z, -b, -a)


def _check(sigma2, a, b):
    if not sigma2 > 0:
        raise ValueError("variance must be positive")
    if not a < b:
        raise ValueError("truncation interval must satisfy a < b")


def tg_cdf(x, mu, sigma2, a, b) -> float:
    """CDF of ``N(mu, sigma2)`` truncated to ``[a, b]``, evaluated at ``x``."""
    _check(sigma2, a, b)
    s = math.sqrt(sigma2)
    return _cdf_std((x - mu) / s, (a - mu) / s, (b - mu) / s)


def tg_sf(x, mu, sigma2, a, b) -> float:
    """Survival function ``1 - tg_cdf`` computed without cancellation."""
    _check(sigma2, a, b)
    s = math.sqrt(sigma2)
    return _sf_std((x - mu) / s, (a - mu) / s, (b - mu) / s)


def tg_pvalue_from_limits(stat, vlo, vup, sd, mu=0.0):
    """One- and two-sided p-values for ``H0: v^T theta = mu``."""
    if not vlo < vup or not sd > 0:
        return math.nan, math.nan
    t = _sf_std((stat - mu) / sd, (vlo - mu) / sd, (vup - mu) / sd)
    return t, 2.0 * min(t, 1.0 - t)


def _interval(stat, vlo, vup, sd, alpha, max_expand=200):
    def pivot(mu):
        return _sf_std((stat - mu) / sd, (vlo - mu) / sd, (vup - mu) / sd)

    z = float(ndtri(1 - alpha / 2))

    def solve(target, guess):
        lo, hi = guess - z * sd, guess + z * sd
        step = z * sd
        for _ in range(max_expand):
            if pivot(lo) <= target:
                break
            step *= 2
            lo -= step
        else:
            raise BracketError("could not bracket the lower side")
        step = z * sd
        for _ in range(max_expand):
            if pivot(hi) >= target:
                break
            step *= 2
            hi += step
        else:
            raise BracketError("could not bracket the upper side")
        tol = 1e-8 * sd
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            if pivot(mid) < target:
                lo = mid
            else:
                hi = mid
        return 0.5 * (lo + hi)

    return solve(alpha / 2, stat - z * sd), solve(1 - alpha / 2, stat + z * sd)


def tg_interval(v, y, sigma2, P: Polyhedron, alpha: float = 0.1):
    """Equal-tailed ``1 - alpha`` interval for ``v^T theta``."""
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    v = np.asarray(v, dtype=float)
    vlo, vup = truncation_limits(P, v, y)
    sd = math.sqrt(sigma2 * float(v @ v))
    return _interval(float(v @ np.asarray(y, dtype=float)), vlo, vup, sd, alpha)


def tg_pvalue(v, y, sigma2, P: Polyhedron, alpha: float | None = None, mu: float = 0.0) -> TGResult:
    """TG statistic for ``H0: v^T theta = mu``, with an interval when ``alpha`` is given."""
    if not sigma2 > 0:
        raise ValueError("variance must be positive")
    if isinstance(v, Contrast):
        v = v.v
    v = np.asarray(v, dtype=float)
    y = np.asarray(y, dtype=float)
    stat = float(v @ y)
    vlo, vup = truncation_limits(P, v, y)
    sd = math.sqrt(sigma2 * float(v @ v))
    degenerate = not (vup - vlo > 1e-12 * sd)
    if degenerate:
        return TGResult(stat, vlo, vup, sd, math.nan, math.nan, None, alpha, True)
    p_one, p_two = tg_pvalue_from_limits(stat, vlo, vup, sd, mu)
    ci = None
    if alpha is not None:
        if not 0 < alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        ci = _interval(stat, vlo, vup, sd, alpha)
    return TGResult(stat, vlo, vup, sd, p_one, p_two, ci, alpha, False)
