"""k-nearest-neighbour similarity graphs with Gaussian weights and Laplacians.

Edges carry ``w(i,j) = exp(-d(i,j)^2 / sigma^2)``. Under local scaling
(Zelnik-Manor style) ``sigma^2 = sigma_i * sigma_j`` with ``sigma_i`` the
distance from point i to its k_sigma-th neighbour; under global scaling a
single sigma is used. The directed k-NN graph is symmetrized as
``W <- (W + W^T) / 2``, so mutual edges keep their full weight and one-sided
edges keep half. Nearest-neighbour search is exact brute force, chunked to
bound memory: every benchmark here has at most a few thousand points.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .dataio import FeatureMatrix

UNNORMALIZED = "unnormalized"
SYMMETRIC = "symmetric"

EUCLIDEAN = "euclidean"
COSINE = "cosine"

LOCAL = "local"
GLOBAL = "global"


@dataclass(frozen=True)
class GraphParams:
    """k-NN graph construction parameters.

    k_sigma defaults to ceil(n_neighbors / 2) for local scaling; sigma is
    required for global scaling.
    """

    n_neighbors: int = 10
    metric: str = EUCLIDEAN
    scaling: str = LOCAL
    k_sigma: int | None = None
    sigma: float | None = None
    normalization: str = UNNORMALIZED

    def __post_init__(self):
        if self.n_neighbors < 1:
            raise ValueError("n_neighbors must be >= 1")
        if self.metric not in (EUCLIDEAN, COSINE):
            raise ValueError(f"metric must be euclidean or cosine, got {self.metric!r}")
        if self.scaling not in (LOCAL, GLOBAL):
            raise ValueError(f"scaling must be local or global, got {self.scaling!r}")
        if self.normalization not in (UNNORMALIZED, SYMMETRIC):
            raise ValueError(f"normalization must be unnormalized or symmetric, got {self.normalization!r}")
        if self.scaling == GLOBAL:
            if self.sigma is None or self.sigma <= 0:
                raise ValueError("global scaling requires sigma > 0")
        if self.k_sigma is not None and not 1 <= self.k_sigma <= self.n_neighbors:
            raise ValueError("k_sigma must be in [1, n_neighbors]")

    @property
    def effective_k_sigma(self) -> int:
        return self.k_sigma if self.k_sigma is not None else max(1, math.ceil(self.n_neighbors / 2))

    def label(self) -> dict:
        out = {"n_neighbors": self.n_neighbors, "metric": self.metric,
               "scaling": self.scaling, "normalization": self.normalization}
        if self.scaling == GLOBAL:
            out["sigma"] = self.sigma
        else:
            out["k_sigma"] = self.effective_k_sigma
        return out


@dataclass(frozen=True)
class SimilarityGraph:
    """Symmetric non-negative weight matrix with degrees and a Laplacian."""

    weights: sp.csr_matrix
    degrees: np.ndarray
    laplacian: sp.csr_matrix
    params: GraphParams

    @property
    def n(self) -> int:
        return self.weights.shape[0]


def pairwise_distances(x: np.ndarray, y: np.ndarray, metric: str = EUCLIDEAN) -> np.ndarray:
    """Dense distance block between row sets x and y."""
    if metric == EUCLIDEAN:
        sq = (x * x).sum(axis=1)[:, None] + (y * y).sum(axis=1)[None, :] - 2.0 * (x @ y.T)
        np.maximum(sq, 0.0, out=sq)
        return np.sqrt(sq)
    # Cosine distance 1 - <x,y>/(|x||y|); zero vectors get norm 1 so that the
    # distance to anything is 1 rather than NaN.
    xn = np.linalg.norm(x, axis=1)
    yn = np.linalg.norm(y, axis=1)
    xs = x / np.where(xn > 0, xn, 1.0)[:, None]
    ys = y / np.where(yn > 0, yn, 1.0)[:, None]
    d = 1.0 - xs @ ys.T
    np.maximum(d, 0.0, out=d)
    return d


def _knn_search(x: np.ndarray, k: int, metric: str, chunk: int = 1024):
    """Indices and distances of the k nearest neighbours of each row (self excluded)."""
    n = x.shape[0]
    idx = np.empty((n, k), dtype=np.int64)
    dist = np.empty((n, k), dtype=np.float64)
    for start in range(0, n, chunk):
        stop = min(start + chunk, n)
        block = pairwise_distances(x[start:stop], x, metric)
        rows = np.arange(start, stop)
        block[np.arange(stop - start), rows] = np.inf  # exclude self
        part = np.argpartition(block, k - 1, axis=1)[:, :k]
        part_d = np.take_along_axis(block, part, axis=1)
        order = np.argsort(part_d, axis=1, kind="stable")
        idx[start:stop] = np.take_along_axis(part, order, axis=1)
        dist[start:stop] = np.take_along_axis(part_d, order, axis=1)
    return idx, dist


def gaussian_weights(dist: np.ndarray, denom: np.ndarray) -> np.ndarray:
    """exp(-d^2 / denom) with the degenerate cases pinned: d == 0 gives weight 1
    (duplicate points are maximally similar), and a zero denominator with d > 0
    gives weight 0."""
    dist = np.asarray(dist, dtype=np.float64)
    denom = np.broadcast_to(np.asarray(denom, dtype=np.float64), dist.shape)
    out = np.zeros_like(dist)
    ok = denom > 0
    out[ok] = np.exp(-(dist[ok] ** 2) / denom[ok])
    out[dist == 0] = 1.0
    return out


def knn_graph(features: FeatureMatrix | np.ndarray, params: GraphParams) -> SimilarityGraph:
    """Build the symmetrized Gaussian k-NN similarity graph over the rows.

    Requires n_neighbors < n. Duplicate points are allowed (weight 1);
    all-identical inputs produce a clique of weight-1 ties and a warning.
    """
    x = features.values if isinstance(features, FeatureMatrix) else np.asarray(features, dtype=np.float64)
    n = x.shape[0]
    if n < 2:
        raise ValueError("need at least 2 data points")
    if not params.n_neighbors < n:
        raise ValueError(f"n_neighbors={params.n_neighbors} must be < n={n}")
    if not np.isfinite(x).all():
        raise ValueError("features contain non-finite entries")
    idx, dist = _knn_search(x, params.n_neighbors, params.metric)
    if dist.max() == 0 and np.all(pairwise_distances(x[:1], x, params.metric) == 0):
        warnings.warn("all features identical: graph is a clique of weight-1 ties", stacklevel=2)
    if params.scaling == LOCAL:
        sigma_i = dist[:, params.effective_k_sigma - 1]
        denom = sigma_i[:, None] * sigma_i[idx]
    else:
        denom = np.full_like(dist, params.sigma**2)
    w = gaussian_weights(dist, denom)
    rows = np.repeat(np.arange(n), params.n_neighbors)
    directed = sp.csr_matrix((w.ravel(), (rows, idx.ravel())), shape=(n, n))
    weights = (directed + directed.T) * 0.5
    weights.setdiag(0.0)
    weights.eliminate_zeros()
    weights = weights.tocsr()
    degrees = np.asarray(weights.sum(axis=1)).ravel()
    lap = laplacian_matrix(weights, degrees, params.normalization)
    return SimilarityGraph(weights=weights, degrees=degrees, laplacian=lap, params=params)


def laplacian_matrix(weights: sp.spmatrix, degrees: np.ndarray, normalization: str) -> sp.csr_matrix:
    """Graph Laplacian of a symmetric weight matrix.

    Unnormalized: L = D - W. Symmetric: L = I - D^{-1/2} W D^{-1/2}, with
    zero-degree rows zeroed (isolated vertices contribute eigenvalue 0).
    """
    n = weights.shape[0]
    if normalization == UNNORMALIZED:
        return (sp.diags(degrees) - weights).tocsr()
    if normalization != SYMMETRIC:
        raise ValueError(f"unknown normalization {normalization!r}")
    inv_sqrt = np.zeros(n)
    pos = degrees > 0
    inv_sqrt[pos] = 1.0 / np.sqrt(degrees[pos])
    d_half = sp.diags(inv_sqrt)
    eye = sp.diags(pos.astype(np.float64))
    return (eye - d_half @ weights @ d_half).tocsr()


def laplacian(graph: SimilarityGraph, normalization: str) -> sp.csr_matrix:
    """Recompute the Laplacian of an assembled graph under a chosen normalization."""
    return laplacian_matrix(graph.weights, graph.degrees, normalization)


def dump_weights(graph: SimilarityGraph, path) -> None:
    """Debug dump of W as ``i,j,weight`` lines (0-based, upper triangle)."""
    coo = sp.triu(graph.weights, k=1).tocoo()
    order = np.lexsort((coo.col, coo.row))
    with open(path, "w", encoding="utf-8") as fh:
        for i, j, v in zip(coo.row[order], coo.col[order], coo.data[order]):
            fh.write(f"{int(i)},{int(j)},{float(v)!r}\n")
