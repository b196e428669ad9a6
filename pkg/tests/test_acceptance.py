"""Acceptance criteria, each run at its stated tolerance.

Every test prints one ``PASS`` or ``FAIL`` line to the terminal before
asserting, so ``pytest -v`` output doubles as the acceptance report.
"""

import math

import numpy as np
import pytest
from scipy import stats

from conftest import SMALL_GRAPH, qp_primal, resample
from glinfer.contrasts import effective_design, fl_segment, likelihood_projection, reg_segment, selected_model
from glinfer.ic import ICConfig, ic_selection_polyhedron, stop_rule
from glinfer.path import kkt_check, primal_at, run_path
from glinfer.penalties import (
    block_diff1,
    difference_matrix,
    graph_incidence,
    grid_edges,
    regression_transform,
    sparse_augment,
)
from glinfer.polytope import build_selection_polyhedron, membership
from glinfer.simulate import ExperimentConfig, run_experiment
from glinfer.tg import tg_pvalue, truncation_limits


def verdict(report, label, ok, detail):
    report(f"{'PASS' if ok else 'FAIL'}  criterion {label}: {detail}")
    return ok


def p_values(result, test, key="p_one"):
    return np.array([r[f"{test}_{key}"] for r in result.records if r["retained"] and r[f"{test}_{key}"] != ""], dtype=float)


# 1 ---------------------------------------------------------------------------


def test_criterion_1_golden(report):
    y = np.array([0.0, 0.0, 1.0, 1.0])
    D = difference_matrix(4, 1)
    tr = run_path(y, D)
    model = selected_model(tr, 1)
    v = fl_segment(model, 1).v
    P = build_selection_polyhedron(tr, 1)
    vlo, vup = truncation_limits(P, v, y)
    res = tg_pvalue(v, y, 1.0, P)
    ok = (
        np.allclose(tr.knots, [1.0, 0.0], atol=1e-12)
        and tr.steps[0].boundary == (1,)
        and tr.steps[0].signs == (1,)
        and np.allclose(v, [-0.5, -0.5, 0.5, 0.5])
        and abs(vlo) < 1e-12
        and vup == math.inf
        and abs(res.p_one - 0.3173) <= 1e-4
    )
    verdict(report, 1, ok, f"knots={tr.knots.tolist()} B1={{2}} s=+1 truncation=[{vlo:.1e}, {vup}] p={res.p_one:.5f}")
    assert ok


# 2 ---------------------------------------------------------------------------


def _leave_instances(rng, D, count):
    """Instances whose full path contains a leave; alternately test the full path and the first leave step."""
    out = []
    while len(out) < count:
        y = rng.standard_normal(D.n)
        tr = run_path(y, D, max_steps=50)
        leaves = [s.k for s in tr.steps if s.action == "leave"]
        if leaves:
            out.append((y, tr.n_steps if len(out) % 2 else leaves[0]))
    return out


def _random_instances(rng, D, count):
    out = []
    for _ in range(count):
        y = rng.standard_normal(D.n)
        out.append((y, int(rng.integers(1, 4))))
    return out


@pytest.mark.slow
def test_criterion_2_polyhedron_equivalence(report):
    rng = np.random.default_rng(2)
    classes = {
        "diff1 n=6": (difference_matrix(6, 1), _random_instances),
        "diff2 n=7": (difference_matrix(7, 2), _random_instances),
        "sparse_augmented n=5": (sparse_augment(difference_matrix(5, 1), 0.2), _leave_instances),
        "graph n=6": (graph_incidence(6, SMALL_GRAPH), _random_instances),
    }
    total_bad, parts, families = 0, [], set()
    for name, (D, make) in classes.items():
        bad = band = 0
        for y, k in make(rng, D, 20):
            tr = run_path(y, D, max_steps=k)
            k = min(k, tr.n_steps)
            P = build_selection_polyhedron(tr, k)
            families |= {f for _, f in P.tags}
            key = tr.keys(k)
            for j in range(500):
                yp = resample(rng, y, j)
                sl = P.slack(yp).min()
                if abs(sl) < 1e-8:
                    band += 1
                    continue
                t2 = run_path(yp, D, max_steps=k)
                same = t2.n_steps >= k and t2.keys(k) == key
                bad += same != membership(P, yp, tol=0.0)
        total_bad += bad
        parts.append(f"{name}: {bad} disagreements ({band} in band)")
    leave_rows = {"leave_sign_neg", "leave_sign_pos", "leave_argmax", "hit_vs_leave"} <= families
    ok = total_bad == 0 and leave_rows
    verdict(report, 2, ok, "; ".join(parts) + f"; leave rows exercised={leave_rows}")
    assert ok


# 3 ---------------------------------------------------------------------------


@pytest.mark.slow
def test_criterion_3_null_uniformity(report):
    res = run_experiment(ExperimentConfig("one_jump", {"n": 60, "delta": 0.0, "loc": 30}, reps=100_000, seed=3, require=(30,)))
    spike, seg = p_values(res, "spike"), p_values(res, "segment")
    ks_spike = stats.kstest(spike, "uniform").pvalue
    ks_seg = stats.kstest(seg, "uniform").pvalue
    ok = res.summary["retained"] >= 2000 and min(spike.size, seg.size) >= 2000 and ks_spike > 0.01 and ks_seg > 0.01
    verdict(report, 3, ok, f"retained={res.summary['retained']} KS spike p={ks_spike:.3f} segment p={ks_seg:.3f} (need > 0.01)")
    assert ok


# 4 ---------------------------------------------------------------------------


@pytest.mark.slow
def test_criterion_4_detection_fractions(report):
    target = {0.0: 0.022, 1.0: 0.30, 2.0: 0.65}
    got = {}
    for delta in target:
        cfg = ExperimentConfig("one_jump", {"n": 60, "delta": delta, "loc": 30}, reps=10_000, seed=4, require=(30,), tests=())
        got[delta] = run_experiment(cfg).summary["detection_fraction"]
    ok = all(abs(got[d] - target[d]) <= 0.02 for d in target)
    detail = ", ".join(f"delta={d:g}: {100 * got[d]:.2f}% (target {100 * target[d]:.1f}%)" for d in target)
    verdict(report, 4, ok, detail)
    assert ok


# 5 ---------------------------------------------------------------------------


def _power(res, test):
    p = p_values(res, test)
    return float(np.mean(p < 0.05)), p.size


@pytest.mark.slow
def test_criterion_5_power_ordering(report):
    params = {"n": 60, "delta": 2.0, "locs": (20, 40), "shape": "bump"}
    runs = {}
    for steps, require in ((1, (20,)), (2, (20, 40))):
        cfg = ExperimentConfig("two_jump", params, reps=17_000, seed=5, steps=steps, require=require, test_location=20)
        runs[steps] = run_experiment(cfg)
    out, ok = [], True
    for test, better in (("segment", 2), ("spike", 1)):
        (p1, n1), (p2, n2) = _power(runs[1], test), _power(runs[2], test)
        se = math.sqrt(p1 * (1 - p1) / n1 + p2 * (1 - p2) / n2)
        sep = (p2 - p1) / se if better == 2 else (p1 - p2) / se
        ok &= min(n1, n2) >= 5000 and sep >= 3
        out.append(f"{test} power step1={p1:.3f} (n={n1}) step2={p2:.3f} (n={n2}) separation={sep:.1f} SE")
    verdict(report, 5, ok, "; ".join(out))
    assert ok


# 6 ---------------------------------------------------------------------------


@pytest.mark.slow
def test_criterion_6_one_off(report):
    cfg = ExperimentConfig("one_jump", {"n": 60, "delta": 2.0, "loc": 30}, reps=20_000, seed=6, require_any=(29, 31))
    res = run_experiment(cfg)
    spike, seg = p_values(res, "spike"), p_values(res, "segment")
    ks = stats.kstest(spike, "uniform").pvalue
    ok = ks > 0.01 and seg.mean() < 0.35
    verdict(report, 6, ok, f"retained={spike.size} spike KS p={ks:.3f} (need > 0.01); segment mean p={seg.mean():.3f} (need < 0.35)")
    assert ok


# 7 ---------------------------------------------------------------------------


@pytest.mark.slow
def test_criterion_7_interval_coverage(report):
    cfg = ExperimentConfig(
        "one_jump", {"n": 60, "delta": 1.0, "loc": 30}, reps=17_000, seed=7, require=(30,), intervals=True, alpha=0.1
    )
    res = run_experiment(cfg)
    out, ok = [], True
    for test in ("segment", "spike"):
        cov = p_values(res, test, "covered")
        ok &= cov.size >= 5000 and 0.88 <= cov.mean() <= 0.92
        out.append(f"{test} coverage={cov.mean():.4f} over {cov.size} retained")
    verdict(report, 7, ok, "; ".join(out) + " (need [0.88, 0.92], >= 5000)")
    assert ok


# 8 ---------------------------------------------------------------------------

IC_CFG = ICConfig("bic", 2, 1.0)


@pytest.mark.slow
def test_criterion_8_ic_membership(report):
    rng = np.random.default_rng(8)
    n = 20
    D = difference_matrix(n, 1)
    theta = np.where(np.arange(n) >= 10, 1.0, 0.0)
    bad = band = checked = 0
    for _ in range(20):
        y = theta + rng.standard_normal(n)
        tr = run_path(y, D, max_steps=n)
        P, ict = ic_selection_polyhedron(y, tr, IC_CFG)
        last = ict.candidates[ict.jhat + IC_CFG.q]
        key, sig = tr.keys(last), ict.signature()
        for _ in range(200):
            yp = y + rng.choice([0.05, 0.2, 0.5]) * rng.standard_normal(n)
            sl = P.slack(yp).min()
            if abs(sl) < 1e-8:
                band += 1
                continue
            t2 = run_path(yp, D, max_steps=n)
            same = t2.n_steps >= last and t2.keys(last) == key and stop_rule(yp, t2, IC_CFG).signature() == sig
            bad += same != (sl > 0)
            checked += 1
    ok = bad == 0
    verdict(report, "8a", ok, f"IC membership vs rerun: {bad} disagreements over {checked} resamples ({band} in band)")
    assert ok


@pytest.fixture(scope="module")
def ic_null_run():
    cfg = ExperimentConfig("one_jump", {"n": 20, "delta": 0.0, "loc": 10}, reps=2000, seed=88, stop=IC_CFG)
    return run_experiment(cfg)


@pytest.mark.slow
@pytest.mark.xfail(
    strict=True,
    reason="min(1, K p) has an atom at 1 whenever K >= 2 changepoints are selected, so it cannot be uniform",
)
def test_criterion_8_bonferroni_uniform_literal(report, ic_null_run):
    bonf = p_values(ic_null_run, "segment", "bonf")
    K = np.array([r["n_changepoints"] for r in ic_null_run.records if r["retained"]])
    ks = stats.kstest(bonf, "uniform").pvalue
    ok = ks > 0.01
    verdict(
        report,
        "8b",
        ok,
        f"KS of Bonferroni-corrected null p-values p={ks:.2e} (need > 0.01); share with K>=2: {np.mean(K >= 2):.2f}, "
        f"share equal to 1: {np.mean(bonf == 1):.2f}",
    )
    assert ok


@pytest.mark.slow
def test_criterion_8_conditional_null_validity(report, ic_null_run):
    p = p_values(ic_null_run, "segment")
    bonf = p_values(ic_null_run, "segment", "bonf")
    ks = stats.kstest(p, "uniform").pvalue
    fwer = float(np.mean(bonf < 0.05))
    se = math.sqrt(0.05 * 0.95 / bonf.size)
    ok = ks > 0.01 and fwer <= 0.05 + 3 * se
    verdict(
        report,
        "8c",
        ok,
        f"uncorrected IC-conditional null p-values KS p={ks:.3f} (need > 0.01); Bonferroni rejection rate={fwer:.4f} "
        f"(need <= {0.05 + 3 * se:.4f})",
    )
    assert ok


# 9 ---------------------------------------------------------------------------


def test_criterion_9_regression_segment_identity(report):
    rng = np.random.default_rng(9)
    worst, done = 0.0, 0
    while done < 50:
        X = rng.standard_normal((12, 3))
        size = int(rng.integers(1, 5))
        breaks = sorted({(int(rng.integers(3)), int(rng.integers(1, 12))) for _ in range(size)})
        XB = effective_design(X, breaks)
        if np.linalg.matrix_rank(XB) < XB.shape[1]:
            continue
        done += 1
        for j in range(1, len(breaks) + 1):
            v = reg_segment(X, breaks, j, 1).v
            err = np.abs(np.outer(v, v) / (v @ v) - likelihood_projection(X, breaks, j)).max()
            worst = max(worst, err)
    ok = worst <= 1e-10
    verdict(report, 9, ok, f"max entrywise error {worst:.2e} over 50 instances (need <= 1e-10)")
    assert ok


# 10 --------------------------------------------------------------------------


def _penalty_classes(rng):
    X = rng.standard_normal((8, 2))
    design = np.hstack([np.diag(X[:, 0]), np.diag(X[:, 1])])
    reg = regression_transform(design, np.zeros(8), block_diff1(8, 2), ridge=0.05)
    return {
        "diff1": (difference_matrix(12, 1), None),
        "diff2": (difference_matrix(12, 2), None),
        "graph": (graph_incidence(16, grid_edges(4, 4)), None),
        "sparse_augmented": (sparse_augment(difference_matrix(10, 1), 0.3), None),
        "regression_transformed": (reg.D_tilde, reg.hat),
    }


@pytest.mark.slow
def test_criterion_10_kkt_and_qp(report):
    rng = np.random.default_rng(10)
    worst_kkt = worst_qp = 0.0
    counts = {}
    for name, (D, hat) in _penalty_classes(rng).items():
        counts[name] = 0
        for _ in range(5):
            y = rng.standard_normal(D.n if hat is None else hat.shape[1])
            y = y if hat is None else hat @ y
            tr = run_path(y, D, max_steps=10 * D.m)
            assert tr.complete
            for k in range(len(tr.knots) - 1):
                hi, lo = tr.knots[k], tr.knots[k + 1]
                for t in (0.25, 0.5, 0.75):
                    lam = lo + t * (hi - lo)
                    beta = primal_at(tr, lam)
                    worst_kkt = max(worst_kkt, kkt_check(y, D, lam, beta, tr.dual_at(lam)))
                    worst_qp = max(worst_qp, float(np.abs(beta - qp_primal(y, D, lam)[0]).max()))
                    counts[name] += 1
    ok = worst_kkt <= 1e-8 and worst_qp <= 1e-5
    verdict(report, 10, ok, f"max KKT violation {worst_kkt:.1e} (<= 1e-8), max QP gap {worst_qp:.1e} (<= 1e-5); lambdas {counts}")
    assert ok
