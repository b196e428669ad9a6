"""Simulation scenarios, noise-level estimation and the experiment runner.

Every replication draws its noise from its own counter-based stream,
``Philox(SeedSequence([seed, rep]))``, and turns uniforms into normals with
the inverse CDF, so results do not depend on the order in which
replications are evaluated or on the platform's normal sampler.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats
from scipy.special import ndtri

from .contrasts import (
    ContrastError,
    SelectedModel1D,
    fl_segment,
    fl_spike,
    gfl_segment,
    graph_partition,
    reg_segment,
    selected_model,
    tf_segment,
    tf_spike,
)
from .ic import ICConfig, ic_selection_polyhedron, stop_rule
from .linalg import null_projector
from .path import primal_at, run_path, step_operators
from .penalties import (
    PenaltyMatrix,
    block_diff1,
    difference_matrix,
    graph_incidence,
    grid_edges,
    regression_transform,
)
from .polytope import build_selection_polyhedron
from .tg import BracketError, Contrast, InfeasibleError, tg_pvalue

SCENARIOS = ("one_jump", "two_jump", "tf_one_knot", "grid_patch", "regression_stocks")
TESTS = ("spike", "segment")


# ---------------------------------------------------------------- random draws


def rep_generator(seed: int, rep: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(rep)])))


def standard_normals(gen: np.random.Generator, size) -> np.ndarray:
    u = gen.random(size)
    # random() lies in [0, 1); avoid the infinite endpoint
    return ndtri(np.where(u == 0.0, np.nextafter(0.0, 1.0), u))


# ------------------------------------------------------------------ scenarios


@dataclass(frozen=True)
class Problem:
    """Mean vector, penalty and (for regression) the design transform."""

    name: str
    theta: np.ndarray
    D: PenaltyMatrix
    family: str
    X: np.ndarray | None = None
    hat: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.theta.size


def one_jump(n: int = 60, delta: float = 0.0, loc: int = 30) -> Problem:
    """Mean ``0`` up to position ``loc`` and ``delta`` afterwards."""
    if not 1 <= loc <= n - 1:
        raise ValueError("loc must lie in 1..n-1")
    theta = np.where(np.arange(1, n + 1) > loc, float(delta), 0.0)
    return Problem("one_jump", theta, difference_matrix(n, 1), "diff1", meta={"locs": (loc,)})


def two_jump(n: int = 60, delta: float = 2.0, locs=(20, 40), shape: str = "staircase") -> Problem:
    """Two jumps of height ``delta``; ``shape`` is ``staircase`` (0, d, 2d) or ``bump`` (0, d, 0)."""
    l1, l2 = sorted(int(x) for x in locs)
    if not 1 <= l1 < l2 <= n - 1:
        raise ValueError("locations must satisfy 1 <= l1 < l2 <= n-1")
    i = np.arange(1, n + 1)
    theta = np.where(i > l1, float(delta), 0.0)
    if shape == "staircase":
        theta = theta + np.where(i > l2, float(delta), 0.0)
    elif shape == "bump":
        theta = np.where(i > l2, 0.0, theta)
    else:
        raise ValueError("shape must be 'staircase' or 'bump'")
    return Problem("two_jump", theta, difference_matrix(n, 1), "diff1", meta={"locs": (l1, l2), "shape": shape})


def tf_one_knot(n: int = 40, delta: float = 0.0, loc: int = 20) -> Problem:
    """Zero on the first ``loc + 1`` points, then a line of slope ``delta / 20``.

    The kink is at position ``loc + 1``, which is second-difference row ``loc``.
    """
    i = np.arange(1, n + 1)
    theta = float(delta) / 20.0 * np.maximum(0, i - loc - 1)
    return Problem("tf_one_knot", theta, difference_matrix(n, 2), "diff2", meta={"locs": (loc,)})


def grid_patch(rows: int = 10, cols: int = 10, delta: float = 0.0, patch: int = 5) -> Problem:
    """Grid with a ``patch x patch`` block of height ``delta`` in the lower-left corner."""
    theta = np.zeros((rows, cols))
    theta[rows - patch :, :patch] = float(delta)
    D = graph_incidence(rows * cols, grid_edges(rows, cols))
    return Problem("grid_patch", theta.ravel(), D, "graph", meta={"rows": rows, "cols": cols, "patch": patch})


def regression_stocks(n: int = 251, delta: float = 1.0, ridge: float = 1e-3, seed: int = 0, scale: float = 0.01) -> Problem:
    """Varying-coefficient regression on three synthetic Gaussian predictors.

    Coefficient 1 has levels ``-d, d, -d`` with breaks after ``n // 3`` and
    twice that; coefficient 2 switches from ``-d`` to ``d`` after ``n // 2``;
    coefficient 3 is constant ``d``.  With ``n = 251`` the breaks fall at
    83, 166 and 125.
    """
    gen = np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), 0, 1])))
    Z = scale * standard_normals(gen, (n, 3))
    b1, b3 = n // 3, n // 2
    b2 = 2 * b1
    t = np.arange(1, n + 1)
    beta = np.vstack(
        [
            np.where((t > b1) & (t <= b2), delta, -delta),
            np.where(t > b3, delta, -delta),
            np.full(n, float(delta)),
        ]
    )
    theta = np.sum(Z * beta.T, axis=1)
    design = np.hstack([np.diag(Z[:, j]) for j in range(3)])
    Db = block_diff1(n, 3)
    tr = regression_transform(design, np.zeros(n), Db, ridge=ridge)
    return Problem(
        "regression_stocks",
        theta,
        tr.D_tilde,
        "regression",
        X=Z,
        hat=tr.hat,
        meta={"locs": ((0, b1), (0, b2), (1, b3)), "ridge": ridge, "block_rows": n - 1, "beta": beta},
    )


BUILDERS = {
    "one_jump": one_jump,
    "two_jump": two_jump,
    "tf_one_knot": tf_one_knot,
    "grid_patch": grid_patch,
    "regression_stocks": regression_stocks,
}


def build_problem(scenario: str, params: dict | None = None) -> Problem:
    if scenario not in BUILDERS:
        raise ValueError(f"unknown scenario {scenario!r}; choose from {SCENARIOS}")
    return BUILDERS[scenario](**(params or {}))


# ------------------------------------------------------------ naive comparator


def naive_z_pvalue(y, model: SelectedModel1D, j: int, sigma2: float) -> float:
    """Two-sided Z-test of equal means on the segments around changepoint ``j``,
    treating the changepoints as fixed in advance."""
    y = np.asarray(y, dtype=float)
    I, _ = model._check(j)
    cps = (0,) + model.changepoints + (model.n,)
    left, right = cps[j - 1], cps[j + 1]
    diff = y[I:right].mean() - y[left:I].mean()
    sd = math.sqrt(sigma2 * (1.0 / (I - left) + 1.0 / (right - I)))
    return float(2.0 * stats.norm.sf(abs(diff) / sd))


# ------------------------------------------------------------ sigma estimation


def _cv_fit(y_train, order, x_train, x_test, n_steps):
    D = difference_matrix(y_train.size, order)
    tr = run_path(y_train, D, max_steps=n_steps)
    preds = []
    # step 0 is the unpenalized fit in null(D) (lambda at the first knot)
    lams = [tr.knots[0]] + [tr.knots[k] for k in range(1, tr.n_steps + 1)]
    for lam in lams:
        beta = primal_at(tr, lam)
        preds.append(np.interp(x_test, x_train, beta))
    return preds


def cv_curve(y, order: int = 1, folds: int = 5, max_steps: int | None = None):
    """Cross-validation error by step, with fold assignment ``i % folds``.

    The fit for step ``k`` is the path solution at the knot that ends the
    step-``k`` segment; step 0 is the fit at the first knot.  Held-out points
    are predicted by linear interpolation.  Returns ``(mean, se)`` arrays.
    """
    y = np.asarray(y, dtype=float)
    n = y.size
    if folds < 2:
        raise ValueError("need at least two folds")
    idx = np.arange(n)
    if max_steps is None:
        max_steps = max(1, min(n // 2, 40))
    per_fold = []
    for f in range(folds):
        test = idx % folds == f
        train = ~test
        preds = _cv_fit(y[train], order, idx[train], idx[test], max_steps)
        per_fold.append([float(np.sum((y[test] - p) ** 2)) for p in preds])
    K = min(len(e) for e in per_fold)
    if K < 2:
        raise ValueError("path too short for a cross-validation curve")
    err = np.array([e[:K] for e in per_fold]) / (n / folds)
    return err.mean(axis=0), err.std(axis=0, ddof=1) / math.sqrt(folds)


def estimate_sigma_cv(y, D: PenaltyMatrix, folds: int = 5, max_steps: int | None = None) -> float:
    """Noise level from the step chosen by cross-validation and the one-SE rule.

    ``sigma^2`` is the residual sum of squares of the projection onto
    ``null(D_{-B_k})`` divided by ``n - nullity``.
    """
    order = {"diff1": 1, "diff2": 2}.get(D.kind)
    if order is None:
        raise ValueError("cross-validation needs an ordered difference penalty")
    y = np.asarray(y, dtype=float)
    mean, se = cv_curve(y, order, folds, max_steps)
    best = int(np.argmin(mean))
    k = int(np.flatnonzero(mean <= mean[best] + se[best])[0])
    if k == 0:
        proj = null_projector(D.dense)
        P, dim = proj.matrix, proj.dim
    else:
        tr = run_path(y, D, max_steps=k)
        step = tr.steps[min(k, tr.n_steps) - 1]
        ops = step_operators(D, step.boundary, step.signs)
        P, dim = ops.P_null, ops.null_dim
    resid = y - P @ y
    dof = y.size - dim
    return float(math.sqrt(max(resid @ resid, 0.0) / dof)) if dof > 0 else 0.0


# ---------------------------------------------------------------- experiments


@dataclass(frozen=True)
class ExperimentConfig:
    """One simulation study.

    ``steps`` fixes the path step examined unless ``stop`` supplies an IC
    rule.  A replication is retained when its model contains every location
    in ``require`` and at least one of ``require_any``.  ``test_location``
    names the changepoint to test; by default it is the single required
    location, the first matching ``require_any`` entry, or the step-1
    changepoint.  Locations are 1-based rows of ``D`` (for the regression
    scenario, ``(predictor, loc)`` pairs).
    """

    scenario: str = "one_jump"
    params: dict = field(default_factory=dict)
    reps: int = 100
    seed: int = 0
    sigma: float = 1.0
    steps: int = 1
    stop: ICConfig | None = None
    max_steps: int | None = None
    tests: tuple = TESTS
    require: tuple = ()
    require_any: tuple = ()
    test_location: object = None
    components: int | None = None
    alpha: float = 0.1
    intervals: bool = False
    naive: bool = False

    def __post_init__(self):
        if self.reps < 1:
            raise ValueError("reps must be at least 1")
        if self.scenario not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.scenario!r}")
        for t in self.tests:
            if t not in TESTS:
                raise ValueError(f"unknown test {t!r}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["tests"] = list(self.tests)
        d["require"] = list(self.require)
        d["require_any"] = list(self.require_any)
        return d

    @classmethod
    def from_dict(cls, obj: dict) -> "ExperimentConfig":
        obj = dict(obj)
        if obj.get("stop") is not None:
            obj["stop"] = ICConfig(**obj["stop"])
        for key in ("tests", "require", "require_any"):
            if key in obj:
                obj[key] = tuple(tuple(x) if isinstance(x, list) else x for x in obj[key])
        if isinstance(obj.get("test_location"), list):
            obj["test_location"] = tuple(obj["test_location"])
        return cls(**obj)


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    records: list
    summary: dict

    def to_csv(self) -> str:
        return records_to_csv(self.records, self.config.tests)

    def summary_json(self) -> str:
        return json.dumps(self.summary, indent=2, sort_keys=True)


def _locations_1d(step):
    pairs = sorted(zip(step.boundary, step.signs))
    return [(i + 1, s) for i, s in pairs]


def _regression_breaks(step, block_rows):
    out = []
    for i, s in sorted(zip(step.boundary, step.signs)):
        out.append(((i // block_rows, i % block_rows + 1), s))
    return out


def _pick_location(cfg, present, first):
    if cfg.test_location is not None:
        return cfg.test_location if cfg.test_location in present else None
    if len(cfg.require) == 1:
        return cfg.require[0]
    for loc in cfg.require_any:
        if loc in present:
            return loc
    return first


def _ic_path(y, D, cfg):
    """Extend the path in doubling chunks until the stopping rule fires."""
    cap = cfg.max_steps or min(D.m, 5 * D.n)
    steps = min(cap, 4 * (cfg.stop.q + 2))
    while True:
        trace = run_path(y, D, max_steps=steps)
        if trace.degenerate or trace.complete or steps >= cap:
            return trace
        if stop_rule(y, trace, cfg.stop).khat is not None:
            return trace
        steps = min(cap, 2 * steps)


def _one_rep(problem: Problem, cfg: ExperimentConfig, rep: int) -> dict:
    gen = rep_generator(cfg.seed, rep)
    noise = cfg.sigma * standard_normals(gen, problem.n)
    y = problem.theta + noise
    sigma2 = cfg.sigma**2
    work_y = y if problem.hat is None else problem.hat @ y
    rec = {"rep": rep, "retained": 0, "k": 0, "model": "", "test_location": "", "n_changepoints": 0}
    for t in cfg.tests:
        rec.update({f"{t}_stat": "", f"{t}_p_one": "", f"{t}_p_two": "", f"{t}_bonf": "", f"{t}_target": ""})
        if cfg.intervals:
            rec.update({f"{t}_ci_lo": "", f"{t}_ci_hi": "", f"{t}_covered": ""})
    if cfg.naive:
        rec["naive_p"] = ""

    if cfg.stop is None:
        trace = run_path(work_y, problem.D, max_steps=cfg.max_steps or cfg.steps)
    else:
        trace = _ic_path(work_y, problem.D, cfg)
    if trace.degenerate:
        return rec
    if cfg.stop is None:
        k = min(cfg.steps, trace.n_steps)
        if k < cfg.steps:
            return rec
        P = build_selection_polyhedron(trace, k)
    else:
        try:
            P, ict = ic_selection_polyhedron(work_y, trace, cfg.stop)
        except ValueError:
            return rec
        k = ict.khat
    rec["k"] = k
    step = trace.steps[k - 1]
    if problem.hat is not None:
        P = P.pullback(problem.hat)

    if problem.family == "regression":
        locs = _regression_breaks(step, problem.meta["block_rows"])
    else:
        locs = _locations_1d(step)
    present = [loc for loc, _ in locs]
    rec["model"] = " ".join(f"{loc}:{s:+d}" if not isinstance(loc, tuple) else f"{loc[0] + 1}.{loc[1]}:{s:+d}" for loc, s in locs)
    rec["n_changepoints"] = len(locs)
    if any(r not in present for r in cfg.require):
        return rec
    if cfg.require_any and not any(r in present for r in cfg.require_any):
        return rec

    first = trace.steps[0].coord + 1
    if problem.family == "regression":
        first = (trace.steps[0].coord // problem.meta["block_rows"], trace.steps[0].coord % problem.meta["block_rows"] + 1)
    loc = _pick_location(cfg, present, first)
    if loc is None or loc not in present:
        return rec

    contrasts = {}
    try:
        if problem.family in ("diff1", "diff2"):
            model = selected_model(trace, k)
            j = model.changepoints.index(loc) + 1
            for t in cfg.tests:
                if problem.family == "diff1":
                    contrasts[t] = fl_spike(model, j) if t == "spike" else fl_segment(model, j)
                else:
                    contrasts[t] = tf_spike(model, j) if t == "spike" else tf_segment(model, j, problem.D)
            if cfg.naive:
                rec["naive_p"] = naive_z_pvalue(y, model, j, sigma2)
        elif problem.family == "graph":
            part = graph_partition(problem.D, step.boundary, step.signs)
            if cfg.components is not None and part.n_components != cfg.components:
                return rec
            i, jn = problem.D.meta["edges"][loc - 1]
            a, b = int(part.labels[i - 1]), int(part.labels[jn - 1])
            if a == b:
                return rec
            for t in cfg.tests:
                if t == "spike":
                    v = np.zeros(problem.n)
                    s = dict(zip(step.boundary, step.signs))[loc - 1]
                    v[jn - 1], v[i - 1] = s, -s
                    contrasts[t] = Contrast(v, "spike", loc, s)
                else:
                    contrasts[t] = gfl_segment(part, a, b)
        else:
            breaks = [b for b, _ in locs]
            j = sorted(breaks).index(loc) + 1
            s = dict(locs)[loc]
            for t in cfg.tests:
                contrasts[t] = reg_segment(problem.X, breaks, j, s)
    except ContrastError:
        return rec

    rec["retained"] = 1
    rec["test_location"] = loc if not isinstance(loc, tuple) else f"{loc[0] + 1}.{loc[1]}"
    K = max(1, len(locs))
    for t, c in contrasts.items():
        try:
            res = tg_pvalue(c.v, y, sigma2, P, alpha=cfg.alpha if cfg.intervals else None)
        except (InfeasibleError, BracketError):
            continue
        target = float(c.v @ problem.theta)
        rec[f"{t}_stat"] = res.stat
        rec[f"{t}_target"] = target
        if res.degenerate:
            continue
        rec[f"{t}_p_one"] = res.p_one
        rec[f"{t}_p_two"] = res.p_two
        rec[f"{t}_bonf"] = min(1.0, K * res.p_one)
        if cfg.intervals and res.ci is not None:
            rec[f"{t}_ci_lo"], rec[f"{t}_ci_hi"] = res.ci
            rec[f"{t}_covered"] = int(res.ci[0] <= target <= res.ci[1])
    return rec


def _run_chunk(args):
    cfg, lo, hi = args
    problem = build_problem(cfg.scenario, cfg.params)
    return [_one_rep(problem, cfg, r) for r in range(lo, hi)]


def worker_count() -> int:
    env = os.environ.get("GLINFER_THREADS")
    cpus = os.cpu_count() or 1
    if env:
        try:
            return max(1, min(int(env), cpus))
        except ValueError:
            pass
    return 1


def run_experiment(cfg: ExperimentConfig, workers: int | None = None) -> ExperimentResult:
    """Run ``cfg.reps`` replications; output is independent of ``workers``."""
    workers = worker_count() if workers is None else max(1, workers)
    if workers == 1 or cfg.reps < 2 * workers:
        records = _run_chunk((cfg, 0, cfg.reps))
    else:
        bounds = np.linspace(0, cfg.reps, 4 * workers + 1).astype(int)
        chunks = [(cfg, int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
        with ProcessPoolExecutor(max_workers=workers) as ex:
            records = [r for part in ex.map(_run_chunk, chunks) for r in part]
    return ExperimentResult(cfg, records, summarize(records, cfg))


def _floats(records, key):
    return np.array([r[key] for r in records if r.get(key, "") != ""], dtype=float)


def summarize(records, cfg: ExperimentConfig, level: float = 0.05) -> dict:
    """Aggregates computed from the per-replication records only."""
    retained = [r for r in records if r["retained"]]
    out = {
        "reps": len(records),
        "retained": len(retained),
        "detection_fraction": len(retained) / len(records) if records else math.nan,
        "mean_k": float(np.mean([r["k"] for r in records])) if records else math.nan,
        "tests": {},
    }
    for t in cfg.tests:
        p = _floats(retained, f"{t}_p_one")
        bonf = _floats(retained, f"{t}_bonf")
        entry = {
            "count": int(p.size),
            "power": float(np.mean(p < level)) if p.size else None,
            "power_bonferroni": float(np.mean(bonf < level)) if bonf.size else None,
            "mean_p": float(p.mean()) if p.size else None,
            "ks_pvalue": float(stats.kstest(p, "uniform").pvalue) if p.size > 1 else None,
            "quantiles": np.quantile(p, np.linspace(0, 1, 11)).tolist() if p.size else [],
        }
        if cfg.intervals:
            cov = _floats(retained, f"{t}_covered")
            entry["coverage"] = float(cov.mean()) if cov.size else None
        out["tests"][t] = entry
    if cfg.naive:
        p = _floats(retained, "naive_p")
        out["naive"] = {"count": int(p.size), "power": float(np.mean(p < level)) if p.size else None}
    return out


def records_to_csv(records, tests=TESTS) -> str:
    if not records:
        return ""
    buf = io.StringIO()
    fields = list(records[0].keys())
    w = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
    w.writeheader()
    for r in records:
        w.writerow({k: (repr(float(v)) if isinstance(v, float) else v) for k, v in r.items()})
    return buf.getvalue()
