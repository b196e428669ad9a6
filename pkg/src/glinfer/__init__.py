"""Selective inference along the generalized lasso path."""

from .contrasts import (
    ContrastError,
    GraphPartition,
    SelectedModel1D,
    StepSignModel,
    declutter,
    fl_segment,
    fl_spike,
    gfl_segment,
    graph_partition,
    reg_segment,
    selected_model,
    step_sign_model,
    tf_segment,
    tf_spike,
)
from .ic import ICConfig, ic_selection_polyhedron, stop_rule
from .linalg import CodimensionError, null_projector, rank1_null_basis
from .path import PathTrace, kkt_check, primal_at, run_path
from .penalties import (
    PenaltyMatrix,
    difference_matrix,
    graph_incidence,
    grid_edges,
    regression_transform,
    sparse_augment,
)
from .polytope import Polyhedron, build_selection_polyhedron, membership
from .simulate import ExperimentConfig, ExperimentResult, estimate_sigma_cv, naive_z_pvalue, run_experiment
from .tg import Contrast, TGResult, tg_interval, tg_pvalue

__version__ = "0.1.0"

__all__ = [
    "CodimensionError",
    "Contrast",
    "ContrastError",
    "ExperimentConfig",
    "ExperimentResult",
    "GraphPartition",
    "ICConfig",
    "PathTrace",
    "PenaltyMatrix",
    "Polyhedron",
    "SelectedModel1D",
    "StepSignModel",
    "TGResult",
    "build_selection_polyhedron",
    "declutter",
    "difference_matrix",
    "estimate_sigma_cv",
    "fl_segment",
    "fl_spike",
    "gfl_segment",
    "graph_incidence",
    "graph_partition",
    "grid_edges",
    "ic_selection_polyhedron",
    "kkt_check",
    "membership",
    "naive_z_pvalue",
    "null_projector",
    "primal_at",
    "rank1_null_basis",
    "reg_segment",
    "regression_transform",
    "run_experiment",
    "run_path",
    "selected_model",
    "sparse_augment",
    "step_sign_model",
    "stop_rule",
    "tf_segment",
    "tf_spike",
    "tg_interval",
    "tg_pvalue",
]
