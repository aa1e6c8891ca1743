"""Command-line interface.

Subcommands: ``fingerprint`` (SMILES -> feature CSV), ``classify`` (one MBO
run on one split), ``experiment`` (grid sweep from a JSON config),
``consensus`` (two pinned configs averaged per split), and ``metrics rs``
(residue-similarity table). All outputs are deterministic given the seeds:
no timestamps or timings are written to result files. Commands exit nonzero
with a diagnostic on any error.
"""

from __future__ import annotations

import functools
import json
import sys
from pathlib import Path

import click
import numpy as np

from .dataio import (
    generate_splits,
    labeled_count_for_fraction,
    load_dataset,
    load_feature_matrix,
    standardize_features,
)
from .experiment import ExperimentConfig, run_consensus, run_experiment
from .fingerprint import EcfpParams, ecfp_matrix
from .graph import GraphParams, dump_weights, knn_graph
from .mbo import MboParams, mbo_classify
from .metrics import SingleClassError, roc_auc, rs_scores, write_rs_csv
from .spectral import eigendecompose, nystrom


def _friendly_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (ValueError, RuntimeError, OSError) as exc:
            raise click.ClickException(str(exc)) from exc

    return wrapper


@click.group()
def main():
    """Scarcely-labeled molecular classification with spectral graph diffusion."""


@main.command()
@click.option("--input", "input_path", required=True, type=click.Path(exists=True), help="Dataset CSV (smiles,label).")
@click.option("--output", "output_path", required=True, type=click.Path(), help="Feature CSV to write.")
@click.option("--diameter", default=4, show_default=True, help="Fingerprint diameter (2 * rounds).")
@click.option("--n-bits", default=1024, show_default=True, help="Folded length (power of two).")
@_friendly_errors
def fingerprint(input_path, output_path, diameter, n_bits):
    """Write the ECFP 0/1 matrix of a dataset as a feature CSV."""
    dataset = load_dataset(input_path)
    bits = ecfp_matrix(dataset.smiles, EcfpParams(diameter=diameter, n_bits=n_bits))
    with open(output_path, "w", encoding="utf-8") as fh:
        for row in bits:
            fh.write(",".join("1" if b else "0" for b in row) + "\n")
    click.echo(f"wrote {bits.shape[0]}x{bits.shape[1]} fingerprint matrix to {output_path}")


def _feature_options(fn):
    fn = click.option("--features", "features_path", type=click.Path(exists=True), default=None,
                      help="External feature CSV (standardized unless --no-standardize).")(fn)
    fn = click.option("--no-standardize", is_flag=True, help="Skip standardization of external features.")(fn)
    fn = click.option("--diameter", default=4, show_default=True, help="ECFP diameter when no --features given.")(fn)
    fn = click.option("--n-bits", default=1024, show_default=True, help="ECFP length when no --features given.")(fn)
    return fn


def _load_features(dataset, features_path, no_standardize, diameter, n_bits):
    if features_path is not None:
        fm = load_feature_matrix(features_path, expected_rows=dataset.n)
        return fm if no_standardize else standardize_features(fm)
    from .dataio import FeatureMatrix

    return FeatureMatrix(
        values=ecfp_matrix(dataset.smiles, EcfpParams(diameter=diameter, n_bits=n_bits)).astype(float)
    )


@main.command()
@click.option("--input", "input_path", required=True, type=click.Path(exists=True))
@_feature_options
@click.option("--labeled-fraction", default=0.05, show_default=True)
@click.option("--seed", default=0, show_default=True, help="Master seed (split + initialization).")
@click.option("--n-neighbors", default=10, show_default=True)
@click.option("--metric", default="euclidean", show_default=True, type=click.Choice(["euclidean", "cosine"]))
@click.option("--scaling", default="local", show_default=True, type=click.Choice(["local", "global"]))
@click.option("--sigma", default=None, type=float, help="Global kernel width (required with --scaling global).")
@click.option("--k-sigma", default=None, type=int, help="Local-scaling neighbour rank.")
@click.option("--normalization", default="unnormalized", show_default=True,
              type=click.Choice(["unnormalized", "symmetric"]))
@click.option("--n-eigs", default=50, show_default=True)
@click.option("--eig-method", default="exact", show_default=True, type=click.Choice(["exact", "nystrom"]))
@click.option("--sample-size", default=None, type=int, help="Nystrom landmark count.")
@click.option("--fidelity", default=10.0, show_default=True, help="Forcing strength on labeled points.")
@click.option("--dt", default=0.5, show_default=True)
@click.option("--n-iters", default=100, show_default=True)
@click.option("--n-substeps", default=3, show_default=True)
@click.option("--dump-graph", "dump_graph_path", type=click.Path(), default=None,
              help="Debug dump of the weight matrix as i,j,weight lines.")
@click.option("--output", "output_path", required=True, type=click.Path())
@_friendly_errors
def classify(input_path, features_path, no_standardize, diameter, n_bits, labeled_fraction,
             seed, n_neighbors, metric, scaling, sigma, k_sigma, normalization, n_eigs,
             eig_method, sample_size, fidelity, dt, n_iters, n_substeps, dump_graph_path,
             output_path):
    """Run one labeled/unlabeled split through the full pipeline."""
    dataset = load_dataset(input_path)
    features = _load_features(dataset, features_path, no_standardize, diameter, n_bits)
    gp = GraphParams(n_neighbors=n_neighbors, metric=metric, scaling=scaling,
                     k_sigma=k_sigma, sigma=sigma, normalization=normalization)
    n_labeled = labeled_count_for_fraction(dataset.n, labeled_fraction)
    split = generate_splits(dataset.n, n_labeled, 1, seed=seed)[0]
    ne = min(n_eigs, dataset.n)
    if eig_method == "nystrom":
        if sample_size is None:
            raise click.ClickException("--eig-method nystrom requires --sample-size")
        decomp = nystrom(features, ne, sample_size, gp, seed=seed)
    else:
        graph = knn_graph(features, gp)
        if dump_graph_path:
            dump_weights(graph, dump_graph_path)
        decomp = eigendecompose(graph.laplacian, ne)
    params = MboParams(fidelity=fidelity, dt=dt, n_iters=n_iters,
                       n_classes=dataset.n_classes, n_substeps=n_substeps, seed=split.seed)
    out = mbo_classify(decomp, split, dataset.labels, params)
    auc = None
    if dataset.n_classes == 2:
        unlabeled = split.unlabeled_indices
        try:
            auc = roc_auc(out.probabilities[unlabeled, 1], dataset.labels[unlabeled])
        except SingleClassError:
            auc = None
    doc = {
        "dataset": dataset.name,
        "n": dataset.n,
        "n_classes": dataset.n_classes,
        "params": {
            "features": Path(features_path).name if features_path else EcfpParams(diameter, n_bits).name,
            **gp.label(),
            "n_eigs": ne,
            "eig_method": eig_method,
            "fidelity": fidelity,
            "dt": dt,
            "n_iters": n_iters,
            "n_substeps": n_substeps,
            "seed": seed,
        },
        "split": {"labeled_count": n_labeled, "seed": split.seed},
        "auc": auc,
        "hard_labels": out.hard_labels.tolist(),
        "probabilities": out.probabilities.tolist(),
    }
    _write_json(doc, output_path)
    click.echo(f"auc={auc!r} -> {output_path}" if auc is not None else f"wrote {output_path}")


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True),
              help="JSON config mirroring ExperimentConfig (see README).")
@click.option("--output", "output_path", required=True, type=click.Path(), help="Results JSON.")
@click.option("--csv", "csv_path", type=click.Path(), default=None, help="Flat per-configuration CSV.")
@click.option("--cache-dir", type=click.Path(), default=None, help="Spectral decomposition cache directory.")
@click.option("--verbose", is_flag=True, help="Print one line per configuration group to stderr.")
@_friendly_errors
def experiment(config_path, output_path, csv_path, cache_dir, verbose):
    """Grid-sweep a dataset and report mean ROC-AUC over random splits."""
    with open(config_path, encoding="utf-8") as fh:
        cfg = ExperimentConfig.from_dict(json.load(fh))
    progress = (lambda msg: print(msg, file=sys.stderr)) if verbose else None
    result = run_experiment(cfg, cache_dir=cache_dir, progress=progress)
    _write_json(result.to_json_dict(), output_path)
    if csv_path:
        result.write_csv(csv_path)
    best = result.best
    click.echo(
        f"best mean_auc={best.mean_auc:.4f} +/- {best.std_auc:.4f} over "
        f"{len(best.per_split_auc)} splits ({best.skipped} skipped) -> {output_path}"
    )


@main.command()
@click.option("--config-a", required=True, type=click.Path(exists=True), help="First pinned config JSON.")
@click.option("--config-b", required=True, type=click.Path(exists=True), help="Second pinned config JSON.")
@click.option("--trials", default=10, show_default=True)
@click.option("--output", "output_path", required=True, type=click.Path())
@click.option("--cache-dir", type=click.Path(), default=None)
@_friendly_errors
def consensus(config_a, config_b, trials, output_path, cache_dir):
    """Average two pinned methods' probabilities; report mean AUC over trials."""
    with open(config_a, encoding="utf-8") as fh:
        cfg_a = ExperimentConfig.from_dict(json.load(fh))
    with open(config_b, encoding="utf-8") as fh:
        cfg_b = ExperimentConfig.from_dict(json.load(fh))
    result = run_consensus(cfg_a, cfg_b, trials, cache_dir=cache_dir)
    _write_json(result.to_json_dict(), output_path)
    rec = result.configurations[0]
    click.echo(f"consensus mean_auc={rec.mean_auc:.4f} +/- {rec.std_auc:.4f} over {trials} trials -> {output_path}")


@main.group()
def metrics():
    """Evaluation utilities."""


@metrics.command("rs")
@click.option("--input", "input_path", required=True, type=click.Path(exists=True))
@_feature_options
@click.option("--predictions", "predictions_path", type=click.Path(exists=True), default=None,
              help="Optional predicted labels, one integer per line.")
@click.option("--output", "output_path", required=True, type=click.Path())
@_friendly_errors
def metrics_rs(input_path, features_path, no_standardize, diameter, n_bits, predictions_path, output_path):
    """Write the residue-similarity table for a dataset featurization."""
    dataset = load_dataset(input_path)
    features = _load_features(dataset, features_path, no_standardize, diameter, n_bits)
    predicted = None
    if predictions_path:
        predicted = np.loadtxt(predictions_path, dtype=np.int64, ndmin=1)
    report = rs_scores(features, dataset.labels, predicted)
    write_rs_csv(report, output_path)
    click.echo(
        f"RI={report.ri:.4f} SI={report.si:.4f} RSI={report.rsi:.4f} -> {output_path}"
    )


def _write_json(doc: dict, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


if __name__ == "__main__":
    main()
