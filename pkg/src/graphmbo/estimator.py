"""scikit-learn-style wrappers around the functional core.

EcfpFingerprinter is a stateless transformer turning SMILES strings into
0/1 fingerprint matrices. MboClassifier follows the semi-supervised estimator
convention of sklearn's label propagation family: ``fit(X, y)`` takes the
*full* data matrix with ``y == -1`` marking unlabeled points, propagates
labels transductively, and exposes the results as ``transduction_`` /
``label_distributions_``. ``predict``/``predict_proba`` answer for the
training points (pass the training X back, or nothing); this model does not
extend to unseen points.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_array

from .dataio import SplitSpec
from .fingerprint import EcfpParams, ecfp_matrix
from .graph import GraphParams, knn_graph
from .mbo import MboParams, mbo_classify
from .spectral import eigendecompose, nystrom


class EcfpFingerprinter(BaseEstimator, TransformerMixin):
    """Transform a sequence of SMILES strings into an (n, n_bits) 0/1 matrix."""

    def __init__(self, diameter: int = 4, n_bits: int = 1024):
        self.diameter = diameter
        self.n_bits = n_bits

    def fit(self, X, y=None):
        self.params_ = EcfpParams(diameter=self.diameter, n_bits=self.n_bits)
        return self

    def transform(self, X) -> np.ndarray:
        if not hasattr(self, "params_"):
            self.fit(X)
        if isinstance(X, str):
            raise ValueError("pass a sequence of SMILES strings, not a single string")
        return ecfp_matrix(list(X), self.params_)

    def get_feature_names_out(self, input_features=None):
        return np.asarray([f"bit_{i}" for i in range(self.n_bits)], dtype=object)


class MboClassifier(BaseEstimator, ClassifierMixin):
    """Transductive semi-supervised classifier on a similarity-graph spectrum.

    Parameters mirror the pipeline stages: k-NN graph construction
    (n_neighbors, metric, scaling, sigma, normalization), spectral truncation
    (n_eigs, eig_method, sample_size), and the diffusion-threshold dynamics
    (fidelity, dt, n_iters, n_substeps). `random_state` seeds the random
    initialization of unlabeled rows.
    """

    def __init__(
        self,
        n_neighbors: int = 10,
        metric: str = "euclidean",
        scaling: str = "local",
        k_sigma: int | None = None,
        sigma: float | None = None,
        normalization: str = "unnormalized",
        n_eigs: int = 50,
        eig_method: str = "exact",
        sample_size: int | None = None,
        fidelity: float = 10.0,
        dt: float = 0.5,
        n_iters: int = 100,
        n_substeps: int = 3,
        random_state: int = 0,
    ):
        self.n_neighbors = n_neighbors
        self.metric = metric
        self.scaling = scaling
        self.k_sigma = k_sigma
        self.sigma = sigma
        self.normalization = normalization
        self.n_eigs = n_eigs
        self.eig_method = eig_method
        self.sample_size = sample_size
        self.fidelity = fidelity
        self.dt = dt
        self.n_iters = n_iters
        self.n_substeps = n_substeps
        self.random_state = random_state

    def fit(self, X, y):
        """Propagate the labeled entries of y (-1 = unlabeled) over all of X."""
        X = check_array(X, dtype=np.float64)
        y = np.asarray(y)
        if y.shape[0] != X.shape[0]:
            raise ValueError(f"X has {X.shape[0]} rows but y has {y.shape[0]} entries")
        labeled_mask = y != -1
        n_labeled = int(labeled_mask.sum())
        if n_labeled == 0:
            raise ValueError("need at least one labeled point (y != -1)")
        if n_labeled == y.shape[0]:
            raise ValueError("all points are labeled; nothing to propagate")
        self.classes_ = np.unique(y[labeled_mask])
        if self.classes_.shape[0] < 2:
            raise ValueError("need labeled points from at least 2 classes")
        class_index = {c: i for i, c in enumerate(self.classes_)}
        labels = np.zeros(y.shape[0], dtype=np.int64)
        labels[labeled_mask] = [class_index[c] for c in y[labeled_mask]]

        params = GraphParams(
            n_neighbors=self.n_neighbors,
            metric=self.metric,
            scaling=self.scaling,
            k_sigma=self.k_sigma,
            sigma=self.sigma,
            normalization=self.normalization,
        )
        n_eigs = min(self.n_eigs, X.shape[0])
        if self.eig_method == "nystrom":
            if self.sample_size is None:
                raise ValueError("eig_method='nystrom' requires sample_size")
            decomposition = nystrom(X, n_eigs, self.sample_size, params, seed=self.random_state)
            self.graph_ = None
        else:
            self.graph_ = knn_graph(X, params)
            decomposition = eigendecompose(self.graph_.laplacian, n_eigs)
        self.decomposition_ = decomposition

        split = SplitSpec(
            gamma=labeled_mask.astype(np.uint8),
            labeled_count=n_labeled,
            seed=self.random_state,
        )
        out = mbo_classify(
            decomposition,
            split,
            labels,
            MboParams(
                fidelity=self.fidelity,
                dt=self.dt,
                n_iters=self.n_iters,
                n_classes=self.classes_.shape[0],
                n_substeps=self.n_substeps,
                seed=self.random_state,
            ),
        )
        self.label_distributions_ = out.probabilities
        self.transduction_ = self.classes_[out.hard_labels]
        self.n_features_in_ = X.shape[1]
        self._fit_X = X
        return self

    def _check_fitted_X(self, X):
        if not hasattr(self, "transduction_"):
            raise ValueError("MboClassifier is not fitted")
        if X is not None:
            X = check_array(X, dtype=np.float64)
            if X.shape != self._fit_X.shape or not np.array_equal(X, self._fit_X):
                raise ValueError(
                    "MboClassifier is transductive: predict only answers for the "
                    "exact matrix passed to fit"
                )

    def predict(self, X=None):
        self._check_fitted_X(X)
        return self.transduction_.copy()

    def predict_proba(self, X=None):
        self._check_fitted_X(X)
        return self.label_distributions_.copy()

    def fit_predict(self, X, y):
        return self.fit(X, y).transduction_.copy()
