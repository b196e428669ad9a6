"""Command-line interface.

Exit codes: 0 on success, 2 for bad input, 3 for numerical degeneracy
(an empty path, an infeasible or degenerate truncation, a failed bracket).
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import io
from .contrasts import (
    ContrastError,
    declutter,
    fl_segment,
    fl_spike,
    gfl_segment,
    graph_partition,
    selected_model,
    step_sign_model,
    tf_segment,
    tf_spike,
)
from .ic import ICConfig, ic_selection_polyhedron
from .linalg import CodimensionError
from .path import run_path, trace_to_dict
from .plots import step_sign_ascii, step_sign_svg, step_sign_text
from .polytope import build_selection_polyhedron
from .simulate import SCENARIOS, ExperimentConfig, estimate_sigma_cv, run_experiment
from .tg import BracketError, Contrast, InfeasibleError, tg_pvalue

EXIT_OK, EXIT_INPUT, EXIT_DEGENERATE = 0, 2, 3


class DegenerateError(RuntimeError):
    pass


def _add_penalty_args(p):
    p.add_argument("--penalty", default="d1", help="d1, d2, graph or custom")
    p.add_argument("--edges", help="edge-list CSV for --penalty graph")
    p.add_argument("--matrix", help="dense matrix CSV for --penalty custom")
    p.add_argument("--sparse-alpha", type=float, help="append alpha*I to the penalty")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="glinfer", description="Selective inference along the generalized lasso path.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("path", help="compute the dual path")
    p.add_argument("--input", required=True, help="CSV with one value per line")
    _add_penalty_args(p)
    p.add_argument("--max-steps", type=int)
    p.add_argument("--out", default="-")

    p = sub.add_parser("infer", help="TG p-value and interval for one contrast")
    p.add_argument("--trace", required=True, help="JSON written by the path command")
    p.add_argument("--step", type=int, help="path step to condition on (default: last)")
    p.add_argument("--stop", choices=("aic", "bic", "ebic"), help="select the step with an information criterion")
    p.add_argument("--q", type=int, default=2)
    p.add_argument("--gamma", type=float, default=0.5, help="EBIC gamma")
    p.add_argument("--contrast", choices=("spike", "segment"))
    p.add_argument("--location", type=int, help="1-based changepoint row or graph edge")
    p.add_argument("--min-gap", type=int, help="declutter before building the contrast")
    p.add_argument("--contrast-file", help="CSV with a custom contrast vector")
    p.add_argument("--sigma", type=float, required=True)
    p.add_argument("--alpha", type=float, help="also report a 1-alpha interval")
    p.add_argument("--out", default="-")

    p = sub.add_parser("simulate", help="run a simulation study")
    p.add_argument("--config", help="JSON file with experiment fields")
    p.add_argument("--scenario", choices=SCENARIOS, default="one_jump")
    p.add_argument("--param", action="append", default=[], metavar="KEY=VALUE", help="scenario parameter")
    p.add_argument("--reps", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--steps", type=int, default=1)
    p.add_argument("--stop", choices=("aic", "bic", "ebic"))
    p.add_argument("--q", type=int, default=2)
    p.add_argument("--gamma", type=float, default=0.5)
    p.add_argument("--sigma", type=float, default=1.0, help="noise level used to generate data")
    p.add_argument("--require", type=int, action="append", default=[])
    p.add_argument("--require-any", type=int, action="append", default=[])
    p.add_argument("--test-location", type=int)
    p.add_argument("--intervals", action="store_true")
    p.add_argument("--alpha", type=float, default=0.1)
    p.add_argument("--naive", action="store_true")
    p.add_argument("--out-csv")
    p.add_argument("--out-json", default="-")

    p = sub.add_parser("stepsign", help="locations and signs of a selected model")
    p.add_argument("--trace", required=True)
    p.add_argument("--step", type=int, help="default: last step")
    p.add_argument("--format", choices=("txt", "ascii", "svg"), default="txt")
    p.add_argument("--out", default="-")

    p = sub.add_parser("estimate-sigma", help="noise level by cross-validation")
    p.add_argument("--input", required=True)
    _add_penalty_args(p)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--out", default="-")
    return parser


def _load_trace(path):
    obj = io.read_json(path)
    for key in ("y", "penalty", "steps"):
        if key not in obj:
            raise ValueError(f"{path}: missing field {key!r}")
    D = io.penalty_from_spec(obj["penalty"])
    y = np.asarray(obj["y"], dtype=float)
    n_steps = len(obj["steps"])
    if n_steps == 0:
        raise DegenerateError("the stored path has no steps")
    trace = run_path(y, D, max_steps=max(n_steps, 1))
    stored = [(tuple(s["boundary"]), tuple(s["signs"])) for s in obj["steps"]]
    rerun = [(tuple(i + 1 for i in s.boundary), tuple(s.signs)) for s in trace.steps]
    if rerun != stored:
        raise ValueError(f"{path}: stored steps do not match the path recomputed from y")
    return trace, obj


def _cmd_path(args):
    y = io.read_vector_csv(args.input)
    D, spec = io.build_penalty(args.penalty, y.size, args.edges, args.matrix, args.sparse_alpha)
    trace = run_path(y, D, max_steps=args.max_steps)
    out = trace_to_dict(trace)
    out["penalty"] = spec
    io.write_json(args.out, out)
    if trace.degenerate:
        raise DegenerateError("y lies in the null space of D; the path is empty")


def _graph_contrast(trace, step, kind, location):
    part = graph_partition(trace.D, step.boundary, step.signs)
    edges = trace.D.meta["edges"]
    if not 1 <= location <= len(edges):
        raise ContrastError(f"edge {location} outside 1..{len(edges)}")
    row = location - 1
    signs = dict(zip(step.boundary, step.signs))
    if row not in signs:
        raise ContrastError(f"edge {location} is not in the boundary set")
    i, j = edges[row]
    if kind == "spike":
        v = np.zeros(trace.D.n)
        v[j - 1], v[i - 1] = signs[row], -signs[row]
        return Contrast(v, "spike", location, signs[row])
    a, b = int(part.labels[i - 1]), int(part.labels[j - 1])
    return gfl_segment(part, a, b)


def _cmd_infer(args):
    if args.sigma is None or not args.sigma > 0:
        raise ValueError("--sigma must be positive")
    trace, _ = _load_trace(args.trace)
    y = trace.y
    info = {}
    if args.stop:
        if args.step is not None:
            raise ValueError("--step and --stop are exclusive")
        full = run_path(y, trace.D)
        P, ict = ic_selection_polyhedron(y, full, ICConfig(args.stop, args.q, args.sigma**2, args.gamma))
        trace, k = full, ict.khat
        info["ic"] = {
            "penalty": args.stop,
            "q": args.q,
            "candidates": list(ict.candidates),
            "khat": k,
            # falls are conditioned on the observed sign of a^T y as well
            "sign_conditioned_pairs": [[p.lo, p.hi] for p in ict.pairs if not p.convex()],
        }
    else:
        k = args.step if args.step is not None else trace.n_steps
        if not 1 <= k <= trace.n_steps:
            raise ValueError(f"--step must lie in 1..{trace.n_steps}")
        P = build_selection_polyhedron(trace, k)
    step = trace.steps[k - 1]

    if args.contrast_file:
        c = Contrast(io.read_vector_csv(args.contrast_file), "custom")
        if c.v.size != trace.D.n:
            raise ValueError(f"contrast has length {c.v.size}, expected {trace.D.n}")
    elif args.contrast and args.location is not None:
        if trace.D.kind == "graph":
            c = _graph_contrast(trace, step, args.contrast, args.location)
        elif trace.D.kind in ("diff1", "diff2"):
            model = selected_model(trace, k)
            if args.min_gap is not None:
                model = declutter(model, args.min_gap)
            if args.location not in model.changepoints:
                raise ContrastError(f"location {args.location} is not in the selected model {list(model.changepoints)}")
            j = model.changepoints.index(args.location) + 1
            if trace.D.kind == "diff1":
                c = fl_spike(model, j) if args.contrast == "spike" else fl_segment(model, j)
            else:
                c = tf_spike(model, j) if args.contrast == "spike" else tf_segment(model, j, trace.D)
        else:
            raise ValueError(f"no built-in contrasts for penalty kind {trace.D.kind!r}; use --contrast-file")
    else:
        raise ValueError("give --contrast with --location, or --contrast-file")

    res = tg_pvalue(c.v, y, args.sigma**2, P, alpha=args.alpha)
    out = res.to_dict()
    out.update({"step": k, "contrast": c.kind, "location": c.location, "v": c.v.tolist(), **info})
    io.write_json(args.out, out)
    if res.degenerate:
        raise DegenerateError("truncation interval is degenerate; p-value undefined")


def _coerce(value):
    for cast in (int, float):
        try:
            return cast(value)
        except ValueError:
            pass
    return value


def _cmd_simulate(args):
    if args.config:
        cfg = ExperimentConfig.from_dict(io.read_json(args.config))
    else:
        params = {}
        for item in args.param:
            if "=" not in item:
                raise ValueError(f"--param expects KEY=VALUE, got {item!r}")
            key, value = item.split("=", 1)
            params[key] = _coerce(value)
        cfg = ExperimentConfig(
            scenario=args.scenario,
            params=params,
            reps=args.reps,
            seed=args.seed,
            steps=args.steps,
            sigma=args.sigma,
            stop=ICConfig(args.stop, args.q, args.sigma**2, args.gamma) if args.stop else None,
            require=tuple(args.require),
            require_any=tuple(args.require_any),
            test_location=args.test_location,
            alpha=args.alpha,
            intervals=args.intervals,
            naive=args.naive,
        )
    try:
        result = run_experiment(cfg)
    except TypeError as exc:
        raise ValueError(f"bad scenario parameters: {exc}") from exc
    if args.out_csv:
        io.write_text(args.out_csv, result.to_csv())
    summary = dict(result.summary, config=cfg.to_dict())
    io.write_text(args.out_json, json.dumps(summary, indent=2, sort_keys=True, default=str) + "\n")


def _cmd_stepsign(args):
    trace, _ = _load_trace(args.trace)
    k = args.step if args.step is not None else trace.n_steps
    if not 0 <= k <= trace.n_steps:
        raise ValueError(f"--step must lie in 0..{trace.n_steps}")
    model = step_sign_model(trace, k)
    render = {"txt": step_sign_text, "ascii": step_sign_ascii, "svg": step_sign_svg}[args.format]
    io.write_text(args.out, render(model))


def _cmd_estimate_sigma(args):
    y = io.read_vector_csv(args.input)
    D, _ = io.build_penalty(args.penalty, y.size, args.edges, args.matrix, args.sparse_alpha)
    sigma = estimate_sigma_cv(y, D, folds=args.folds)
    io.write_json(args.out, {"sigma": sigma, "folds": args.folds, "n": int(y.size)})


COMMANDS = {
    "path": _cmd_path,
    "infer": _cmd_infer,
    "simulate": _cmd_simulate,
    "stepsign": _cmd_stepsign,
    "estimate-sigma": _cmd_estimate_sigma,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INPUT
    try:
        COMMANDS[args.command](args)
    except (DegenerateError, InfeasibleError, BracketError, CodimensionError) as exc:
        print(f"glinfer: numerical degeneracy: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except (ValueError, KeyError, OSError, ContrastError) as exc:
        print(f"glinfer: {exc}", file=sys.stderr)
        return EXIT_INPUT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
