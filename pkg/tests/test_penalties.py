import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from glinfer.penalties import (
    DimensionError,
    PenaltyMatrix,
    block_diff1,
    custom_penalty,
    difference_matrix,
    graph_incidence,
    grid_edges,
    read_edge_csv,
    regression_transform,
    sparse_augment,
)


def test_diff1_dense():
    expected = np.array([[-1, 1, 0, 0], [0, -1, 1, 0], [0, 0, -1, 1]], dtype=float)
    np.testing.assert_array_equal(difference_matrix(4, 1).dense, expected)


def test_diff2_dense():
    expected = np.array([[1, -2, 1, 0, 0], [0, 1, -2, 1, 0], [0, 0, 1, -2, 1]], dtype=float)
    D = difference_matrix(5, 2)
    np.testing.assert_array_equal(D.dense, expected)
    assert D.kind == "diff2"


@given(st.integers(3, 40), st.sampled_from([1, 2]))
@settings(max_examples=30, deadline=None)
def test_difference_matrix_matches_numpy_diff(n, order):
    D = difference_matrix(n, order)
    y = np.arange(n, dtype=float) ** 2
    np.testing.assert_allclose(D @ y, np.diff(y, order))
    assert D.shape == (n - order, n)


@pytest.mark.parametrize("n,order", [(1, 1), (2, 2), (5, 3)])
def test_difference_matrix_rejects(n, order):
    with pytest.raises((ValueError, DimensionError)):
        difference_matrix(n, order)


def test_graph_incidence_rows():
    D = graph_incidence(3, [(1, 2), (2, 3)])
    np.testing.assert_array_equal(D.dense, [[-1, 1, 0], [0, -1, 1]])
    assert D.meta["edges"] == ((1, 2), (2, 3))


@pytest.mark.parametrize("edges", [[(2, 1)], [(1, 1)], [(1, 2), (1, 2)], [(0, 1)], [(1, 4)]])
def test_graph_incidence_validates(edges):
    with pytest.raises(ValueError):
        graph_incidence(3, edges)


def test_path_graph_equals_diff1():
    n = 7
    D = graph_incidence(n, [(i, i + 1) for i in range(1, n)])
    np.testing.assert_array_equal(D.dense, difference_matrix(n, 1).dense)


def test_grid_edges_count_and_order():
    edges = grid_edges(3, 4)
    assert len(edges) == 3 * 3 + 2 * 4
    assert edges[0] == (1, 2)
    assert all(i < j for i, j in edges)
    assert len(set(edges)) == len(edges)


def test_read_edge_csv_skips_header(tmp_path):
    p = tmp_path / "e.csv"
    p.write_text("from,to\n1,2\n2,3\n")
    assert read_edge_csv(p) == [(1, 2), (2, 3)]


def test_sparse_augment_stacks_identity():
    D = sparse_augment(difference_matrix(4, 1), 0.5)
    assert D.shape == (7, 4)
    np.testing.assert_array_equal(D.dense[3:], 0.5 * np.eye(4))
    assert D.kind == "sparse_augmented"
    with pytest.raises(ValueError):
        sparse_augment(difference_matrix(4, 1), 0.0)


def test_zero_row_rejected():
    with pytest.raises(ValueError):
        PenaltyMatrix(np.array([[1.0, -1.0], [0.0, 0.0]]))


def test_unknown_kind_rejected():
    with pytest.raises(ValueError):
        PenaltyMatrix(np.eye(2), kind="banana")


def test_dense_is_read_only():
    D = custom_penalty([[1.0, -1.0]])
    with pytest.raises(ValueError):
        D.dense[0, 0] = 3.0


def test_rows_and_rows_except():
    D = difference_matrix(5, 1)
    np.testing.assert_array_equal(D.rows([1, 3]), D.dense[[1, 3]])
    np.testing.assert_array_equal(D.rows_except([1, 3]), D.dense[[0, 2]])


def test_block_diff1_structure():
    D = block_diff1(4, 3)
    assert D.shape == (9, 12)
    np.testing.assert_array_equal(D.dense[3:6, 4:8], difference_matrix(4, 1).dense)
    assert not D.dense[:3, 4:].any()


def test_regression_transform_full_rank(rng):
    X = rng.standard_normal((10, 4))
    y = rng.standard_normal(10)
    tr = regression_transform(X, y, difference_matrix(4, 1))
    H = X @ np.linalg.pinv(X)
    np.testing.assert_allclose(tr.y_tilde, H @ y, atol=1e-12)
    np.testing.assert_allclose(tr.hat, H, atol=1e-12)
    np.testing.assert_allclose(tr.D_tilde.dense, difference_matrix(4, 1).dense @ np.linalg.pinv(X), atol=1e-12)
    beta = rng.standard_normal(4)
    np.testing.assert_allclose(tr.coef(X @ beta), beta, atol=1e-10)


def test_regression_transform_needs_ridge_when_rank_deficient(rng):
    X = rng.standard_normal((3, 5))
    with pytest.raises(np.linalg.LinAlgError):
        regression_transform(X, np.zeros(3), difference_matrix(5, 1))
    tr = regression_transform(X, np.ones(3), difference_matrix(5, 1), ridge=0.1)
    assert tr.design.shape == (8, 5)
    assert tr.hat.shape == (8, 3)
    np.testing.assert_allclose(tr.y_tilde, tr.hat @ np.ones(3), atol=1e-12)


def test_regression_transform_dimension_error(rng):
    with pytest.raises(DimensionError):
        regression_transform(rng.standard_normal((6, 3)), np.zeros(6), difference_matrix(4, 1))
