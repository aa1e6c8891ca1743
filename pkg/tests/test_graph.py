import numpy as np
import pytest
import scipy.sparse as sp

from helpers import component_count
from graphmbo.graph import (
    GraphParams,
    dump_weights,
    gaussian_weights,
    knn_graph,
    laplacian,
    laplacian_matrix,
)


def test_params_validation():
    with pytest.raises(ValueError):
        GraphParams(n_neighbors=0)
    with pytest.raises(ValueError):
        GraphParams(metric="manhattan")
    with pytest.raises(ValueError):
        GraphParams(scaling="global")  # sigma missing
    with pytest.raises(ValueError):
        GraphParams(n_neighbors=5, k_sigma=6)
    assert GraphParams(n_neighbors=10).effective_k_sigma == 5
    assert GraphParams(n_neighbors=5).effective_k_sigma == 3


def test_three_collinear_points():
    x = np.array([[0.0], [1.0], [3.0]])
    g = knn_graph(x, GraphParams(n_neighbors=1, scaling="global", sigma=1.0))
    w = g.weights.toarray()
    assert w[0, 1] == pytest.approx(np.exp(-1.0), abs=1e-15)
    assert w[1, 2] > 0  # present after symmetrization (half weight)
    assert w[0, 2] == 0
    assert np.all(np.diag(w) == 0)


def test_zero_distance_weight_one():
    x = np.array([[0.0, 0.0], [0.0, 0.0], [1.0, 0.0]])
    g = knn_graph(x, GraphParams(n_neighbors=1))
    assert g.weights[0, 1] == 1.0


def test_identical_features_warn():
    with pytest.warns(UserWarning, match="weight-1 ties"):
        g = knn_graph(np.zeros((5, 3)), GraphParams(n_neighbors=2))
    # Every selected edge carries weight 1; one-sided selections keep 1/2
    # after the (W + W^T)/2 symmetrization.
    assert set(np.unique(g.weights.data)) <= {0.5, 1.0}


def test_two_separated_clusters_block_diagonal(rng):
    a = rng.normal(size=(10, 2))
    b = rng.normal(size=(10, 2)) + 200.0
    g = knn_graph(np.vstack([a, b]), GraphParams(n_neighbors=3))
    w = g.weights.toarray()
    assert np.all(w[:10, 10:] == 0)
    assert component_count(g.weights) == 2


def test_laplacian_two_node_path():
    w = sp.csr_matrix(np.array([[0.0, 1.0], [1.0, 0.0]]))
    lap = laplacian_matrix(w, np.array([1.0, 1.0]), "unnormalized")
    assert np.array_equal(lap.toarray(), [[1.0, -1.0], [-1.0, 1.0]])
    lap_sym = laplacian_matrix(w, np.array([1.0, 1.0]), "symmetric")
    assert np.allclose(lap_sym.toarray(), [[1.0, -1.0], [-1.0, 1.0]])


def test_unnormalized_rows_sum_to_zero(rng):
    g = knn_graph(rng.normal(size=(40, 3)), GraphParams(n_neighbors=5))
    row_sums = np.asarray(g.laplacian.sum(axis=1)).ravel()
    assert np.abs(row_sums).max() < 1e-10


def test_symmetric_normalization_isolated_vertex_convention():
    w = sp.csr_matrix((3, 3))
    lap = laplacian_matrix(w, np.zeros(3), "symmetric")
    assert lap.nnz == 0  # zero-degree rows are zero, not identity


def test_laplacian_recompute_matches_graph(rng):
    g = knn_graph(rng.normal(size=(30, 2)), GraphParams(n_neighbors=4))
    assert np.allclose(laplacian(g, "unnormalized").toarray(), g.laplacian.toarray())
    sym = laplacian(g, "symmetric").toarray()
    vals = np.linalg.eigvalsh(sym)
    assert vals.min() > -1e-10


def test_gaussian_weight_special_cases():
    d = np.array([0.0, 1.0, 2.0])
    denom = np.array([0.0, 0.0, 4.0])
    w = gaussian_weights(d, denom)
    assert w[0] == 1.0  # d = 0 wins over zero denominator
    assert w[1] == 0.0  # zero sigma, positive distance
    assert w[2] == pytest.approx(np.exp(-1.0))


def test_invariants_random_graphs(rng):
    # Symmetry, PSD, zero row sums, kernel multiplicity == component count.
    for trial in range(25):
        n = int(rng.integers(20, 90))
        n_clusters = int(rng.integers(1, 4))
        blocks = [
            rng.normal(size=(n // n_clusters + (1 if c < n % n_clusters else 0), 3))
            + 100.0 * c
            for c in range(n_clusters)
        ]
        x = np.vstack(blocks)
        g = knn_graph(x, GraphParams(n_neighbors=int(rng.integers(2, 6))))
        w = g.weights
        assert abs(w - w.T).max() < 1e-12
        assert w.data.min() > 0 and w.data.max() <= 1.0
        lap = g.laplacian.toarray()
        assert np.abs(lap.sum(axis=1)).max() < 1e-10
        vals = np.linalg.eigvalsh(lap)
        assert vals.min() >= -1e-10
        n_comp = component_count(w)
        # True kernel zeros are ~1e-15; weak bridges can sit near 1e-9.
        assert int((vals < 1e-10).sum()) == n_comp
        if n_comp > 1:
            assert vals[n_comp] > 1e-10


def test_permutation_conjugates_weights(rng):
    x = rng.normal(size=(25, 3))
    g = knn_graph(x, GraphParams(n_neighbors=4))
    perm = rng.permutation(25)
    g_perm = knn_graph(x[perm], GraphParams(n_neighbors=4))
    p = np.eye(25)[perm]
    assert np.allclose(g_perm.weights.toarray(), p @ g.weights.toarray() @ p.T, atol=1e-12)


def test_cosine_metric(rng):
    x = np.abs(rng.normal(size=(20, 4))) + 0.1
    g = knn_graph(x, GraphParams(n_neighbors=3, metric="cosine"))
    assert g.weights.data.min() > 0
    # Scaling rows leaves cosine distances unchanged.
    g2 = knn_graph(x * rng.uniform(0.5, 2.0, size=(20, 1)), GraphParams(n_neighbors=3, metric="cosine"))
    assert np.allclose(g.weights.toarray(), g2.weights.toarray(), atol=1e-12)


def test_knn_preconditions(rng):
    with pytest.raises(ValueError, match="n_neighbors"):
        knn_graph(rng.normal(size=(5, 2)), GraphParams(n_neighbors=5))
    with pytest.raises(ValueError, match="at least 2"):
        knn_graph(np.zeros((1, 2)), GraphParams(n_neighbors=1))
    with pytest.raises(ValueError, match="non-finite"):
        knn_graph(np.array([[0.0], [np.nan]]), GraphParams(n_neighbors=1))


def test_dump_weights_format(tmp_path, rng):
    g = knn_graph(rng.normal(size=(10, 2)), GraphParams(n_neighbors=2))
    path = tmp_path / "w.txt"
    dump_weights(g, path)
    lines = path.read_text().strip().splitlines()
    assert len(lines) == sp.triu(g.weights, k=1).nnz
    i, j, v = lines[0].split(",")
    assert int(i) < int(j)
    assert g.weights[int(i), int(j)] == pytest.approx(float(v))
