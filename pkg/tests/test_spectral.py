import numpy as np
import pytest

from graphmbo.dataio import FeatureMatrix
from graphmbo.graph import GraphParams, knn_graph, pairwise_distances
from graphmbo.spectral import (
    EigensolverError,
    IllConditionedLandmarksError,
    SpectralDecomposition,
    cache_key,
    cached_eigendecompose,
    eigendecompose,
    estimate_global_sigma,
    load_decomposition,
    nystrom,
    residual,
    save_decomposition,
)


def test_two_node_path_analytic():
    lap = np.array([[1.0, -1.0], [-1.0, 1.0]])
    d = eigendecompose(lap, 2)
    assert np.allclose(d.eigenvalues, [0.0, 2.0], atol=1e-12)
    inv_sqrt2 = 1.0 / np.sqrt(2.0)
    assert np.allclose(np.abs(d.eigenvectors[:, 0]), inv_sqrt2)
    assert np.allclose(np.abs(d.eigenvectors[:, 1]), inv_sqrt2)
    assert np.sign(d.eigenvectors[:, 1]).tolist() in ([1, -1], [-1, 1])


def test_connected_graph_kernel(rng):
    g = knn_graph(rng.normal(size=(60, 3)), GraphParams(n_neighbors=6))
    d = eigendecompose(g.laplacian, 4)
    assert d.eigenvalues[0] == 0.0  # clamped round-off
    assert np.allclose(np.abs(d.eigenvectors[:, 0]), 1.0 / np.sqrt(60), atol=1e-8)


def test_two_components_double_kernel(rng):
    a = rng.normal(size=(15, 2))
    b = rng.normal(size=(15, 2)) + 100.0
    g = knn_graph(np.vstack([a, b]), GraphParams(n_neighbors=3))
    d = eigendecompose(g.laplacian, 2)
    assert np.allclose(d.eigenvalues, [0.0, 0.0], atol=1e-10)


def test_exact_invariants(rng):
    g = knn_graph(rng.normal(size=(80, 4)), GraphParams(n_neighbors=8))
    d = eigendecompose(g.laplacian, 20)
    assert residual(g.laplacian, d) < 1e-8
    gram = d.eigenvectors.T @ d.eigenvectors
    assert np.abs(gram - np.eye(20)).max() < 1e-8
    assert np.all(np.diff(d.eigenvalues) >= 0)
    assert np.all(d.eigenvalues >= 0)


def test_iterative_matches_dense(rng):
    g = knn_graph(rng.normal(size=(600, 3)), GraphParams(n_neighbors=8))
    it = eigendecompose(g.laplacian, 12)  # n > dense_cutoff: Lanczos
    dense = eigendecompose(g.laplacian, 12, dense_cutoff=1000)
    assert np.allclose(it.eigenvalues, dense.eigenvalues, atol=1e-9)
    assert residual(g.laplacian, it) < 1e-8
    # Sign canonicalization makes the columns directly comparable.
    assert np.abs(it.eigenvectors[:, 1:] - dense.eigenvectors[:, 1:]).max() < 1e-6


def test_eigendecompose_deterministic(rng):
    g = knn_graph(rng.normal(size=(600, 3)), GraphParams(n_neighbors=8))
    a = eigendecompose(g.laplacian, 10)
    b = eigendecompose(g.laplacian, 10)
    assert np.array_equal(a.eigenvalues, b.eigenvalues)
    assert np.array_equal(a.eigenvectors, b.eigenvectors)


def test_n_eigs_bounds(rng):
    lap = np.eye(4)
    with pytest.raises(ValueError):
        eigendecompose(lap, 0)
    with pytest.raises(ValueError):
        eigendecompose(lap, 5)


def test_non_convergence_reports_progress(rng):
    g = knn_graph(rng.normal(size=(700, 3)), GraphParams(n_neighbors=6))
    with pytest.raises(EigensolverError, match="did not converge"):
        eigendecompose(g.laplacian, 40, max_iter=1)


def test_nystrom_precondition():
    x = np.random.default_rng(0).normal(size=(50, 2))
    with pytest.raises(ValueError, match="n_eigs <= sample_size"):
        nystrom(x, 11, sample_size=10)
    with pytest.raises(ValueError, match="exceeds"):
        nystrom(x, 5, sample_size=51)


def _dense_normalized_laplacian(x, sigma):
    k = np.exp(-pairwise_distances(x, x, "euclidean") ** 2 / sigma**2)
    deg = k.sum(axis=1)
    return np.eye(x.shape[0]) - k / np.sqrt(np.outer(deg, deg))


def test_nystrom_full_sample_reproduces_exact(rng):
    x = np.vstack([rng.normal(size=(40, 2)), rng.normal(size=(40, 2)) + 8.0])
    d = nystrom(x, 8, sample_size=80, seed=5)
    assert d.method == "nystrom"
    sigma = estimate_global_sigma(x, "euclidean")
    lap = _dense_normalized_laplacian(x, sigma)
    assert residual(lap, d) < 1e-6
    gram = d.eigenvectors.T @ d.eigenvectors
    assert np.abs(gram - np.eye(8)).max() < 1e-8


def test_nystrom_subspace_close_to_exact(rng):
    from scipy.linalg import subspace_angles

    x = np.vstack([rng.normal(size=(250, 2)), rng.normal(size=(250, 2)) + 10.0])
    approx = nystrom(x, 10, sample_size=100, seed=2)
    sigma = estimate_global_sigma(x, "euclidean")
    exact = eigendecompose(_dense_normalized_laplacian(x, sigma), 10, dense_cutoff=600)
    angles = np.degrees(subspace_angles(approx.eigenvectors[:, :5], exact.eigenvectors[:, :5]))
    assert angles.max() < 15.0


def test_nystrom_rank_deficient_landmarks():
    x = np.zeros((30, 2))  # identical points: rank-1 landmark block
    with pytest.raises(IllConditionedLandmarksError) as exc_info:
        nystrom(x, 5, sample_size=10)
    assert exc_info.value.condition > 0


def test_nystrom_respects_global_sigma(rng):
    x = rng.normal(size=(40, 2))
    params = GraphParams(n_neighbors=5, scaling="global", sigma=2.5)
    d = nystrom(x, 4, sample_size=40, params=params, seed=1)
    lap = _dense_normalized_laplacian(x, 2.5)
    assert residual(lap, d) < 1e-6


def test_cache_roundtrip(tmp_path, rng):
    g = knn_graph(rng.normal(size=(30, 2)), GraphParams(n_neighbors=4))
    d = eigendecompose(g.laplacian, 6)
    path = tmp_path / "d.eig"
    save_decomposition(d, path)
    loaded = load_decomposition(path)
    assert np.array_equal(loaded.eigenvalues, d.eigenvalues)
    assert np.array_equal(loaded.eigenvectors, d.eigenvectors)
    assert loaded.method == d.method
    # magic header
    assert path.read_bytes()[:8] == b"GMBOEIG\x00"
    with pytest.raises(ValueError, match="not a spectral cache"):
        bad = tmp_path / "bad.eig"
        bad.write_bytes(b"badmagic" + b"\x00" * 32)
        load_decomposition(bad)


def test_cached_equals_fresh(tmp_path, rng):
    x = rng.normal(size=(40, 3))
    fm = FeatureMatrix(values=x)
    params = GraphParams(n_neighbors=5)
    g = knn_graph(fm, params)
    key = cache_key(fm, params, 8)
    first = cached_eigendecompose(g.laplacian, 8, tmp_path, key)
    second = cached_eigendecompose(g.laplacian, 8, tmp_path, key)  # from disk
    fresh = eigendecompose(g.laplacian, 8)
    assert np.array_equal(second.eigenvalues, fresh.eigenvalues)
    assert np.array_equal(second.eigenvectors, fresh.eigenvectors)
    assert np.array_equal(first.eigenvectors, second.eigenvectors)
    # key changes when inputs change
    assert key != cache_key(fm, params, 9)
    assert key != cache_key(FeatureMatrix(values=x + 1.0), params, 8)


def test_decomposition_immutability(rng):
    d = SpectralDecomposition(eigenvalues=np.zeros(2), eigenvectors=np.eye(3)[:, :2])
    with pytest.raises(ValueError):
        d.eigenvalues[0] = 1.0
