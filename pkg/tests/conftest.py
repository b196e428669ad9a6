import numpy as np
import pytest
from scipy.optimize import lsq_linear

from glinfer.penalties import difference_matrix, graph_incidence, sparse_augment

SMALL_GRAPH = [(1, 2), (2, 3), (1, 3), (3, 4), (4, 5), (5, 6), (4, 6)]


def qp_primal(y, D, lam):
    """Fixed-lambda oracle: solve the box-constrained dual by BVLS, map back to the primal."""
    A = D.dense.T
    res = lsq_linear(A, y, bounds=(-lam, lam), method="bvls", tol=1e-14, max_iter=10_000)
    return y - A @ res.x, res.x


def small_penalties():
    return {
        "diff1": difference_matrix(6, 1),
        "diff2": difference_matrix(7, 2),
        "sparse_augmented": sparse_augment(difference_matrix(5, 1), 0.5),
        "graph": graph_incidence(6, SMALL_GRAPH),
    }


def resample(rng, y, j):
    """Alternate local perturbations of y with uniform draws on the sphere."""
    if j % 2:
        z = rng.standard_normal(y.size)
        return z / np.linalg.norm(z)
    return y / np.linalg.norm(y) + rng.choice([0.01, 0.1, 0.3]) * rng.standard_normal(y.size)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def report(capsys):
    """Print a line to the real terminal even while output is captured."""

    def emit(line):
        with capsys.disabled():
            print(line)

    return emit
