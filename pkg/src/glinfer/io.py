"""Reading data files and rebuilding penalties from their JSON description."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .penalties import (
    PenaltyMatrix,
    custom_penalty,
    difference_matrix,
    graph_incidence,
    read_edge_csv,
    sparse_augment,
)

PENALTY_NAMES = {"d1": "diff1", "d2": "diff2", "diff1": "diff1", "diff2": "diff2", "graph": "graph", "custom": "custom"}


def read_vector_csv(path: str | Path) -> np.ndarray:
    """One number per line; a non-numeric first line is treated as a header."""
    values = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh)):
            if not row or not row[0].strip():
                continue
            try:
                values.append(float(row[0]))
            except ValueError:
                if lineno == 0:
                    continue
                raise ValueError(f"{path}: line {lineno + 1} is not numeric: {row[0]!r}")
    if not values:
        raise ValueError(f"{path}: no data")
    out = np.asarray(values)
    if not np.all(np.isfinite(out)):
        raise ValueError(f"{path}: non-finite values")
    return out


def read_matrix_csv(path: str | Path) -> np.ndarray:
    rows = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row:
                continue
            try:
                rows.append([float(x) for x in row])
            except ValueError:
                if rows:
                    raise
    if not rows:
        raise ValueError(f"{path}: no data")
    return np.atleast_2d(np.asarray(rows))


def penalty_spec(name: str, n: int, edges=None, matrix=None, alpha: float | None = None) -> dict:
    """JSON-ready description of a penalty, enough to rebuild it exactly."""
    kind = PENALTY_NAMES.get(name)
    if kind is None:
        raise ValueError(f"unknown penalty {name!r}; choose from {sorted(PENALTY_NAMES)}")
    spec = {"kind": kind, "n": int(n)}
    if kind == "graph":
        if edges is None:
            raise ValueError("graph penalty needs an edge list")
        spec["edges"] = [[int(i), int(j)] for i, j in edges]
    if kind == "custom":
        if matrix is None:
            raise ValueError("custom penalty needs a matrix")
        spec["matrix"] = np.asarray(matrix, dtype=float).tolist()
    if alpha is not None:
        spec["alpha"] = float(alpha)
    return spec


def penalty_from_spec(spec: dict) -> PenaltyMatrix:
    kind, n = spec["kind"], int(spec["n"])
    if kind in ("diff1", "diff2"):
        D = difference_matrix(n, 1 if kind == "diff1" else 2)
    elif kind == "graph":
        D = graph_incidence(n, [tuple(e) for e in spec["edges"]])
    elif kind == "custom":
        D = custom_penalty(np.asarray(spec["matrix"], dtype=float))
    else:
        raise ValueError(f"unknown penalty kind {kind!r}")
    if D.n != n:
        raise ValueError(f"penalty has {D.n} columns, data has {n}")
    if spec.get("alpha") is not None:
        D = sparse_augment(D, spec["alpha"])
    return D


def build_penalty(name: str, n: int, edges_path=None, matrix_path=None, alpha=None):
    """Penalty and its spec from CLI-style arguments."""
    edges = read_edge_csv(edges_path) if edges_path else None
    matrix = read_matrix_csv(matrix_path) if matrix_path else None
    spec = penalty_spec(name, n, edges, matrix, alpha)
    return penalty_from_spec(spec), spec


def write_text(path, text: str):
    if path is None or str(path) == "-":
        print(text, end="" if text.endswith("\n") else "\n")
    else:
        Path(path).write_text(text)


def write_json(path, obj):
    write_text(path, json.dumps(obj, indent=2) + "\n")


def read_json(path) -> dict:
    with open(path) as fh:
        return json.load(fh)
