"""Benchmark orchestration: featurize, build graphs, decompose, sweep the
hyperparameter grid, and average ROC-AUC over random labeled/unlabeled splits.

One experiment fixes a dataset and a labeled fraction, draws `num_splits`
splits once, and evaluates every configuration in the cross product of the
feature/graph/spectral/MBO grids on those shared splits, so configuration
means are comparable. Per configuration the spectral decomposition is built
once and reused across splits; the n_iters grid is served by checkpointing a
single run at each requested iteration count. AUC is computed from the
class-1 probabilities of the *unlabeled* points only; splits whose unlabeled
side is single-class are skipped and counted. Everything is deterministic
given the master seed.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataio import (
    Dataset,
    FeatureMatrix,
    _child_seed,
    default_num_splits,
    generate_splits,
    labeled_count_for_fraction,
    load_dataset,
    load_feature_matrix,
    standardize_features,
)
from .fingerprint import EcfpParams, ecfp_matrix
from .graph import GraphParams, knn_graph
from .mbo import MboOutput, MboParams, consensus, mbo_classify_many, prepare_batch
from .metrics import SingleClassError, roc_auc
from .spectral import (
    SpectralDecomposition,
    cache_key,
    cached_eigendecompose,
    eigendecompose,
    nystrom,
)

DEFAULT_N_NEIGHBORS = (10, 20, 50)
DEFAULT_N_EIGS = (50, 100, 200)
DEFAULT_FIDELITY = (1.0, 10.0, 100.0)
DEFAULT_DT = (0.1, 0.5, 1.0)
DEFAULT_N_ITERS = (30, 100)

# Below this size the sweep uses one dense full-spectrum factorization per
# graph instead of one Lanczos solve per n_eigs value; a fresh dense call at
# any n_eigs slices the same spectrum, so reuse stays exact.
DENSE_CUTOFF = 2048


@dataclass(frozen=True)
class EcfpSource:
    """Fingerprint features computed in-process over a (diameter, n_bits) grid."""

    diameters: tuple[int, ...] = (2, 4, 6)
    n_bits: tuple[int, ...] = (512, 1024, 2048)

    def label(self) -> dict:
        return {"type": "ecfp", "diameters": list(self.diameters), "n_bits": list(self.n_bits)}


@dataclass(frozen=True)
class ExternalSource:
    """Features supplied as a CSV (e.g. pretrained-model fingerprints);
    standardized to zero mean and unit variance before use by default."""

    path: str
    standardize: bool = True

    def label(self) -> dict:
        return {"type": "external", "path": self.path, "standardize": self.standardize}


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: str
    feature_source: EcfpSource | ExternalSource
    labeled_fraction: float
    num_splits: int | None = None
    stratified: bool = False
    n_neighbors: tuple[int, ...] = DEFAULT_N_NEIGHBORS
    metric: str = "euclidean"
    scaling: str = "local"
    sigma: float | None = None
    normalization: str = "unnormalized"
    n_eigs: tuple[int, ...] = DEFAULT_N_EIGS
    eig_method: str = "exact"
    sample_size: int | None = None
    fidelity: tuple[float, ...] = DEFAULT_FIDELITY
    dt: tuple[float, ...] = DEFAULT_DT
    n_iters: tuple[int, ...] = DEFAULT_N_ITERS
    n_substeps: int = 3
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.labeled_fraction < 1.0:
            raise ValueError("labeled_fraction must be in (0, 1)")
        for name in ("n_neighbors", "n_eigs", "fidelity", "dt", "n_iters"):
            if len(getattr(self, name)) == 0:
                raise ValueError(f"{name} grid must be non-empty")
        if self.eig_method not in ("exact", "nystrom"):
            raise ValueError("eig_method must be exact or nystrom")
        if self.eig_method == "nystrom" and self.sample_size is None:
            raise ValueError("nystrom requires sample_size")

    @property
    def effective_num_splits(self) -> int:
        return self.num_splits if self.num_splits is not None else default_num_splits(self.labeled_fraction)

    def graph_grid(self) -> tuple[GraphParams, ...]:
        return tuple(
            GraphParams(
                n_neighbors=k,
                metric=self.metric,
                scaling=self.scaling,
                sigma=self.sigma,
                normalization=self.normalization,
            )
            for k in self.n_neighbors
        )

    def is_singleton(self) -> bool:
        single_features = (
            isinstance(self.feature_source, ExternalSource)
            or (len(self.feature_source.diameters) == 1 and len(self.feature_source.n_bits) == 1)
        )
        return single_features and all(
            len(g) == 1 for g in (self.n_neighbors, self.n_eigs, self.fidelity, self.dt, self.n_iters)
        )

    def to_dict(self) -> dict:
        return {
            "dataset": self.dataset,
            "feature_source": self.feature_source.label(),
            "labeled_fraction": self.labeled_fraction,
            "num_splits": self.effective_num_splits,
            "stratified": self.stratified,
            "graph": {
                "n_neighbors": list(self.n_neighbors),
                "metric": self.metric,
                "scaling": self.scaling,
                "sigma": self.sigma,
                "normalization": self.normalization,
            },
            "n_eigs": list(self.n_eigs),
            "eig_method": self.eig_method,
            "sample_size": self.sample_size,
            "mbo": {
                "fidelity": list(self.fidelity),
                "dt": list(self.dt),
                "n_iters": list(self.n_iters),
                "n_substeps": self.n_substeps,
            },
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        src = doc.get("feature_source", {"type": "ecfp"})
        if src.get("type") == "external":
            feature_source: EcfpSource | ExternalSource = ExternalSource(
                path=src["path"], standardize=bool(src.get("standardize", True))
            )
        elif src.get("type") == "ecfp":
            feature_source = EcfpSource(
                diameters=tuple(src.get("diameters", (2, 4, 6))),
                n_bits=tuple(src.get("n_bits", (512, 1024, 2048))),
            )
        else:
            raise ValueError(f"unknown feature_source type {src.get('type')!r}")
        graph = doc.get("graph", {})
        mbo = doc.get("mbo", {})
        return cls(
            dataset=doc["dataset"],
            feature_source=feature_source,
            labeled_fraction=float(doc["labeled_fraction"]),
            num_splits=doc.get("num_splits"),
            stratified=bool(doc.get("stratified", False)),
            n_neighbors=tuple(graph.get("n_neighbors", DEFAULT_N_NEIGHBORS)),
            metric=graph.get("metric", "euclidean"),
            scaling=graph.get("scaling", "local"),
            sigma=graph.get("sigma"),
            normalization=graph.get("normalization", "unnormalized"),
            n_eigs=tuple(doc.get("n_eigs", DEFAULT_N_EIGS)),
            eig_method=doc.get("eig_method", "exact"),
            sample_size=doc.get("sample_size"),
            fidelity=tuple(float(c) for c in mbo.get("fidelity", DEFAULT_FIDELITY)),
            dt=tuple(float(t) for t in mbo.get("dt", DEFAULT_DT)),
            n_iters=tuple(int(t) for t in mbo.get("n_iters", DEFAULT_N_ITERS)),
            n_substeps=int(mbo.get("n_substeps", 3)),
            seed=int(doc.get("seed", 0)),
        )


@dataclass
class ConfigurationRecord:
    params: dict
    mean_auc: float
    std_auc: float
    per_split_auc: list[float]
    skipped: int

    def to_dict(self) -> dict:
        def scrub(x):
            return None if isinstance(x, float) and np.isnan(x) else x

        return {
            "params": self.params,
            "mean_auc": scrub(self.mean_auc),
            "std_auc": scrub(self.std_auc),
            "per_split_auc": self.per_split_auc,
            "skipped": self.skipped,
        }


@dataclass
class ExperimentResult:
    dataset: str
    feature_source: dict
    labeled_fraction: float
    num_splits: int
    configurations: list[ConfigurationRecord]
    best_index: int
    timings: dict = field(default_factory=dict)  # wall-clock; not serialized

    @property
    def best(self) -> ConfigurationRecord:
        return self.configurations[self.best_index]

    def to_json_dict(self) -> dict:
        return {
            "dataset": self.dataset,
            "feature_source": self.feature_source,
            "labeled_fraction": self.labeled_fraction,
            "num_splits": self.num_splits,
            "configurations": [c.to_dict() for c in self.configurations],
            "best": self.best.to_dict(),
        }

    def write_csv(self, path) -> None:
        """Flat one-row-per-configuration summary."""
        keys: list[str] = []
        for rec in self.configurations:
            for k in rec.params:
                if k not in keys:
                    keys.append(k)
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(",".join(keys + ["mean_auc", "std_auc", "n_scored", "skipped"]) + "\n")
            for rec in self.configurations:
                cells = [str(rec.params.get(k, "")) for k in keys]
                cells += [repr(rec.mean_auc), repr(rec.std_auc), str(len(rec.per_split_auc)), str(rec.skipped)]
                fh.write(",".join(cells) + "\n")


def _mean_std(values: list[float]) -> tuple[float, float]:
    if not values:
        return float("nan"), float("nan")
    arr = np.asarray(values)
    std = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
    return float(arr.mean()), std


def score_outputs(outputs: list[MboOutput], splits, labels: np.ndarray) -> tuple[list[float], int]:
    """Per-split AUC of class-1 probabilities over unlabeled points.

    Splits whose unlabeled side contains a single class are skipped (AUC is
    undefined there), and the skip count returned.
    """
    aucs: list[float] = []
    skipped = 0
    for out, split in zip(outputs, splits):
        unlabeled = split.unlabeled_indices
        truth = labels[unlabeled]
        try:
            aucs.append(roc_auc(out.probabilities[unlabeled, 1], truth))
        except SingleClassError:
            skipped += 1
    return aucs, skipped


def _materialize_features(dataset: Dataset, source: EcfpSource | ExternalSource):
    """Yield (params_label, FeatureMatrix) pairs, one grid point at a time."""
    if isinstance(source, ExternalSource):
        fm = load_feature_matrix(source.path, expected_rows=dataset.n)
        if source.standardize:
            fm = standardize_features(fm)
        yield {"features": Path(source.path).name}, fm
        return
    for diameter in source.diameters:
        for bits in source.n_bits:
            params = EcfpParams(diameter=diameter, n_bits=bits)
            # ECFP bits are left unscaled: 0/1 entries need no standardization.
            yield {"features": params.name}, FeatureMatrix(
                values=ecfp_matrix(dataset.smiles, params).astype(np.float64)
            )


def run_experiment(cfg: ExperimentConfig, cache_dir=None, progress=None) -> ExperimentResult:
    """Exhaustive sweep of the configured grid; see the module docstring.

    Reported std is the sample standard deviation (ddof=1) over scored splits.
    `cache_dir` enables the on-disk spectral cache. `progress` is an optional
    callable receiving one status string per configuration group.
    """
    t0 = time.perf_counter()
    dataset = load_dataset(cfg.dataset)
    if dataset.n_classes != 2:
        raise ValueError("the experiment protocol scores binary classification only")
    labels = dataset.labels
    n_labeled = labeled_count_for_fraction(dataset.n, cfg.labeled_fraction)
    splits = generate_splits(
        dataset.n,
        n_labeled,
        cfg.effective_num_splits,
        seed=cfg.seed,
        stratified=cfg.stratified,
        labels=labels if cfg.stratified else None,
    )
    timings = {"load": time.perf_counter() - t0}

    records: list[ConfigurationRecord] = []
    n_iters_grid = tuple(sorted(set(cfg.n_iters)))
    for feat_label, features in _materialize_features(dataset, cfg.feature_source):
        for gp in cfg.graph_grid():
            if gp.n_neighbors >= dataset.n:
                continue  # grid point inapplicable to a small dataset
            t_graph = time.perf_counter()
            graph = knn_graph(features, gp)
            timings[f"graph[{feat_label['features']},k={gp.n_neighbors}]"] = time.perf_counter() - t_graph
            full_spectrum = None
            for ne in sorted(set(cfg.n_eigs)):
                ne_eff = min(ne, dataset.n)
                t_eig = time.perf_counter()
                if cfg.eig_method == "exact" and cache_dir is None and dataset.n <= DENSE_CUTOFF:
                    # One full dense factorization per graph serves every
                    # n_eigs value; slicing it equals a fresh call exactly.
                    if full_spectrum is None:
                        full_spectrum = eigendecompose(graph.laplacian, dataset.n, dense_cutoff=DENSE_CUTOFF)
                    decomp = SpectralDecomposition(
                        eigenvalues=full_spectrum.eigenvalues[:ne_eff],
                        eigenvectors=full_spectrum.eigenvectors[:, :ne_eff],
                    )
                else:
                    decomp = _decompose(cfg, features, graph, gp, ne_eff, cache_dir)
                timings[f"eigs[{feat_label['features']},k={gp.n_neighbors},ne={ne_eff}]"] = (
                    time.perf_counter() - t_eig
                )
                if progress:
                    progress(f"{feat_label['features']} k={gp.n_neighbors} ne={ne_eff}")
                batch = prepare_batch(decomp, splits, labels, n_classes=2)
                for c in cfg.fidelity:
                    for dt in cfg.dt:
                        params = MboParams(
                            fidelity=c,
                            dt=dt,
                            n_iters=n_iters_grid[-1],
                            n_classes=2,
                            n_substeps=cfg.n_substeps,
                        )
                        per_checkpoint = batch.run(params, checkpoints=n_iters_grid)
                        for nt, outputs in zip(n_iters_grid, per_checkpoint):
                            aucs, skipped = score_outputs(outputs, splits, labels)
                            mean, std = _mean_std(aucs)
                            records.append(
                                ConfigurationRecord(
                                    params={
                                        **feat_label,
                                        **gp.label(),
                                        "n_eigs": ne_eff,
                                        "eig_method": cfg.eig_method,
                                        "fidelity": c,
                                        "dt": dt,
                                        "n_iters": nt,
                                        "n_substeps": cfg.n_substeps,
                                    },
                                    mean_auc=mean,
                                    std_auc=std,
                                    per_split_auc=aucs,
                                    skipped=skipped,
                                )
                            )
    if not records:
        raise ValueError("no applicable configuration in the grid (all n_neighbors >= n?)")
    means = np.asarray([r.mean_auc for r in records])
    # All-NaN means every split of every configuration was skipped; the result
    # still reports the skip counts.
    best_index = 0 if np.isnan(means).all() else int(np.nanargmax(means))
    timings["total"] = time.perf_counter() - t0
    return ExperimentResult(
        dataset=dataset.name,
        feature_source=cfg.feature_source.label(),
        labeled_fraction=cfg.labeled_fraction,
        num_splits=cfg.effective_num_splits,
        configurations=records,
        best_index=best_index,
        timings=timings,
    )


def _decompose(cfg, features, graph, gp, n_eigs, cache_dir):
    if cfg.eig_method == "nystrom":
        return nystrom(features, n_eigs, cfg.sample_size, gp, seed=cfg.seed)
    if cache_dir is not None:
        key = cache_key(features, gp, n_eigs)
        return cached_eigendecompose(graph.laplacian, n_eigs, cache_dir, key, dense_cutoff=DENSE_CUTOFF)
    return eigendecompose(graph.laplacian, n_eigs, dense_cutoff=DENSE_CUTOFF)


def run_consensus(
    cfg_a: ExperimentConfig, cfg_b: ExperimentConfig, trials: int, cache_dir=None
) -> ExperimentResult:
    """Consensus protocol: average two methods' probability matrices per split.

    Both configs must name the same dataset, labeled fraction, and split
    count, and must each pin a single grid point (tune first, then combine).
    Every trial draws a fresh set of shared splits; both methods see identical
    split indicators and identical random initializations, the per-split
    probability matrices are averaged, AUC is computed from the averaged
    class-1 probabilities over unlabeled points, and the trial records the
    split-mean. The result holds one configuration record whose
    `per_split_auc` is the per-trial means.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if cfg_a.dataset != cfg_b.dataset:
        raise ValueError("consensus configs must target the same dataset")
    if cfg_a.labeled_fraction != cfg_b.labeled_fraction:
        raise ValueError("consensus configs must share labeled_fraction")
    if cfg_a.effective_num_splits != cfg_b.effective_num_splits:
        raise ValueError("consensus configs must share num_splits")
    if cfg_a.stratified != cfg_b.stratified:
        raise ValueError("consensus configs must agree on stratification")
    for name, cfg in (("a", cfg_a), ("b", cfg_b)):
        if not cfg.is_singleton():
            raise ValueError(
                f"config {name} has a non-singleton grid: consensus runs one pinned "
                "configuration per method (run the experiment sweep first)"
            )

    t0 = time.perf_counter()
    dataset = load_dataset(cfg_a.dataset)
    if dataset.n_classes != 2:
        raise ValueError("the consensus protocol scores binary classification only")
    labels = dataset.labels
    n_labeled = labeled_count_for_fraction(dataset.n, cfg_a.labeled_fraction)

    sides = []
    for cfg in (cfg_a, cfg_b):
        feat_label, features = next(_materialize_features(dataset, cfg.feature_source))
        gp = cfg.graph_grid()[0]
        graph = knn_graph(features, gp)
        ne_eff = min(cfg.n_eigs[0], dataset.n)
        decomp = _decompose(cfg, features, graph, gp, ne_eff, cache_dir)
        params = MboParams(
            fidelity=cfg.fidelity[0],
            dt=cfg.dt[0],
            n_iters=cfg.n_iters[0],
            n_classes=2,
            n_substeps=cfg.n_substeps,
        )
        sides.append((feat_label, gp, ne_eff, decomp, params))

    per_trial: list[float] = []
    skipped_total = 0
    for trial in range(trials):
        splits = generate_splits(
            dataset.n,
            n_labeled,
            cfg_a.effective_num_splits,
            seed=_child_seed(cfg_a.seed, 100_000 + trial),
            stratified=cfg_a.stratified,
            labels=labels if cfg_a.stratified else None,
        )
        outputs = [
            mbo_classify_many(decomp, splits, labels, params)[0]
            for (_, _, _, decomp, params) in sides
        ]
        combined = [consensus(oa, ob) for oa, ob in zip(outputs[0], outputs[1])]
        aucs, skipped = score_outputs(combined, splits, labels)
        skipped_total += skipped
        if aucs:
            per_trial.append(float(np.mean(aucs)))
    mean, std = _mean_std(per_trial)
    record = ConfigurationRecord(
        params={
            "consensus": [
                {**sides[0][0], **sides[0][1].label(), "n_eigs": sides[0][2],
                 "fidelity": sides[0][4].fidelity, "dt": sides[0][4].dt, "n_iters": sides[0][4].n_iters},
                {**sides[1][0], **sides[1][1].label(), "n_eigs": sides[1][2],
                 "fidelity": sides[1][4].fidelity, "dt": sides[1][4].dt, "n_iters": sides[1][4].n_iters},
            ],
            "trials": trials,
        },
        mean_auc=mean,
        std_auc=std,
        per_split_auc=per_trial,  # per-trial means; one consensus entry
        skipped=skipped_total,
    )
    return ExperimentResult(
        dataset=dataset.name,
        feature_source={"consensus": [cfg_a.feature_source.label(), cfg_b.feature_source.label()]},
        labeled_fraction=cfg_a.labeled_fraction,
        num_splits=cfg_a.effective_num_splits,
        configurations=[record],
        best_index=0,
        timings={"total": time.perf_counter() - t0},
    )
