"""Semi-supervised molecular classification on similarity graphs.

SMILES strings become extended-connectivity fingerprints, fingerprints become
a Gaussian k-nearest-neighbour graph, and labels propagate on the graph's
leading Laplacian eigenbasis via diffusion-threshold dynamics with a fidelity
term pinning the labeled points. Evaluation follows the scarce-label
protocol: ROC-AUC over many random labeled/unlabeled splits, plus
residue-similarity diagnostics of the featurization.
"""

from .dataio import (
    DataFormatError,
    Dataset,
    FeatureMatrix,
    SplitSpec,
    generate_splits,
    load_dataset,
    load_feature_matrix,
    save_dataset,
    standardize_features,
)
from .estimator import EcfpFingerprinter, MboClassifier
from .experiment import (
    EcfpSource,
    ExperimentConfig,
    ExperimentResult,
    ExternalSource,
    run_consensus,
    run_experiment,
)
from .fingerprint import EcfpParams, Fingerprint, ecfp, ecfp_matrix, fold, initial_identifiers
from .graph import GraphParams, SimilarityGraph, knn_graph, laplacian
from .mbo import (
    MboOutput,
    MboParams,
    consensus,
    mbo_classify,
    mbo_classify_many,
    project_to_simplex,
)
from .metrics import RsReport, SingleClassError, roc_auc, rs_plot_data, rs_scores
from .smiles import Atom, Bond, MolecularGraph, SmilesError, parse_smiles
from .spectral import SpectralDecomposition, eigendecompose, nystrom

__version__ = "0.1.0"

__all__ = [
    "Atom",
    "Bond",
    "DataFormatError",
    "Dataset",
    "EcfpFingerprinter",
    "EcfpParams",
    "EcfpSource",
    "ExperimentConfig",
    "ExperimentResult",
    "ExternalSource",
    "FeatureMatrix",
    "Fingerprint",
    "GraphParams",
    "MboClassifier",
    "MboOutput",
    "MboParams",
    "MolecularGraph",
    "RsReport",
    "SimilarityGraph",
    "SingleClassError",
    "SmilesError",
    "SpectralDecomposition",
    "SplitSpec",
    "consensus",
    "ecfp",
    "ecfp_matrix",
    "eigendecompose",
    "fold",
    "generate_splits",
    "initial_identifiers",
    "knn_graph",
    "laplacian",
    "load_dataset",
    "load_feature_matrix",
    "mbo_classify",
    "mbo_classify_many",
    "nystrom",
    "parse_smiles",
    "project_to_simplex",
    "roc_auc",
    "rs_plot_data",
    "rs_scores",
    "run_consensus",
    "run_experiment",
    "save_dataset",
    "standardize_features",
]
