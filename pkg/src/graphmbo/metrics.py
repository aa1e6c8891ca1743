"""ROC-AUC and residue-similarity (R-S) evaluation.

roc_auc is the rank-statistic form: the probability that a random positive
outscores a random negative, ties counted half, computed from midranks.

The R-S scores diagnose a featurization. For point i in true class k:

    residue    R_i = (1 / (R_max + eps)) * sum_{j not in class k} ||x_i - x_j||
    similarity S_i = (1 / (|C_k| + eps)) * sum_{j in class k} (1 - ||x_i - x_j|| / (d_max + eps))

with R_max the largest *unnormalized* residue sum over all points, d_max the
largest pairwise distance in the data set, and eps = 1e-5 guarding the
degenerate cases (empty classes under scarce-label splits). The in-class sum
includes the point itself. Class and data-set aggregates:

    CRI_k = (1 / (|C_k| + eps)) * sum_{i in class k} R_i      (CSI_k likewise)
    RI = mean_k CRI_k,  SI = mean_k CSI_k,  RSI = 1 - |RI - SI|

Everything lands in [0, 1].
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .dataio import FeatureMatrix

EPSILON = 1e-5


class SingleClassError(ValueError):
    """AUC is undefined when only one class is present."""


def roc_auc(scores, labels) -> float:
    """Area under the ROC curve with midrank tie handling.

    Equals the pairwise concordance probability: ties contribute 0.5.
    Raises SingleClassError unless both classes appear.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValueError("scores and labels must be 1-D and the same length")
    if not np.isin(labels, (0, 1)).all():
        raise ValueError("labels must be 0/1")
    n_pos = int((labels == 1).sum())
    n_neg = labels.shape[0] - n_pos
    if n_pos == 0 or n_neg == 0:
        raise SingleClassError("AUC undefined: need at least one positive and one negative")
    ranks = _midranks(scores)
    pos_rank_sum = float(ranks[labels == 1].sum())
    return (pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def _midranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks with tied values sharing the average of their ranks."""
    n = values.shape[0]
    order = np.argsort(values, kind="stable")
    sorted_vals = values[order]
    starts_mask = np.empty(n, dtype=bool)
    starts_mask[0] = True
    np.not_equal(sorted_vals[1:], sorted_vals[:-1], out=starts_mask[1:])
    group = np.cumsum(starts_mask) - 1
    starts = np.flatnonzero(starts_mask)
    ends = np.append(starts[1:], n) - 1
    group_rank = (starts + ends) / 2.0 + 1.0
    ranks = np.empty(n, dtype=np.float64)
    ranks[order] = group_rank[group]
    return ranks


@dataclass(frozen=True)
class RsReport:
    """Per-point R-S scores and their class/data-set aggregates."""

    residue: np.ndarray  # (n,)
    similarity: np.ndarray  # (n,)
    cri: np.ndarray  # (K,)
    csi: np.ndarray  # (K,)
    ri: float
    si: float
    rsi: float
    true_labels: np.ndarray
    predicted_labels: np.ndarray | None
    epsilon: float = EPSILON

    @property
    def n_classes(self) -> int:
        return self.cri.shape[0]


def rs_scores(
    features: FeatureMatrix | np.ndarray,
    true_labels,
    predicted_labels=None,
    chunk: int = 512,
) -> RsReport:
    """Residue and similarity scores of every point, plus CRI/CSI/RI/SI/RSI.

    Pairwise Euclidean distances are accumulated in row chunks, so the full
    n x n matrix is never materialized. `predicted_labels` is carried through
    untouched for plot coloring.
    """
    x = features.values if isinstance(features, FeatureMatrix) else np.asarray(features, dtype=np.float64)
    y = np.asarray(true_labels, dtype=np.int64)
    n = x.shape[0]
    if y.shape[0] != n:
        raise ValueError(f"{y.shape[0]} labels for {n} points")
    if y.min() < 0:
        raise ValueError("labels must be non-negative class indices")
    pred = None
    if predicted_labels is not None:
        pred = np.asarray(predicted_labels, dtype=np.int64)
        if pred.shape[0] != n:
            raise ValueError(f"{pred.shape[0]} predictions for {n} points")
    n_classes = int(y.max()) + 1
    onehot = np.zeros((n, n_classes))
    onehot[np.arange(n), y] = 1.0

    sq_norms = (x * x).sum(axis=1)
    class_sums = np.empty((n, n_classes))
    d_max = 0.0
    for start in range(0, n, chunk):
        stop = min(start + chunk, n)
        sq = sq_norms[start:stop, None] + sq_norms[None, :] - 2.0 * (x[start:stop] @ x.T)
        np.maximum(sq, 0.0, out=sq)
        d = np.sqrt(sq)
        d_max = max(d_max, float(d.max()))
        class_sums[start:stop] = d @ onehot

    class_counts = onehot.sum(axis=0)
    own_sum = class_sums[np.arange(n), y]
    raw_residue = class_sums.sum(axis=1) - own_sum
    r_max = float(raw_residue.max())
    residue = raw_residue / (r_max + EPSILON)
    similarity = (class_counts[y] - own_sum / (d_max + EPSILON)) / (class_counts[y] + EPSILON)

    cri = (onehot.T @ residue) / (class_counts + EPSILON)
    csi = (onehot.T @ similarity) / (class_counts + EPSILON)
    ri = float(cri.mean())
    si = float(csi.mean())
    rsi = 1.0 - abs(ri - si)
    return RsReport(
        residue=residue,
        similarity=similarity,
        cri=cri,
        csi=csi,
        ri=ri,
        si=si,
        rsi=rsi,
        true_labels=y,
        predicted_labels=pred,
    )


def rs_plot_data(report: RsReport) -> list[tuple[int, int, int, float, float]]:
    """Rows (index, true_class, predicted_class, residue, similarity), grouped
    by true class, ready for external plotting.

    Without predictions the predicted column falls back to the true class
    (flagged with a warning).
    """
    pred = report.predicted_labels
    if pred is None or len(pred) == 0:
        warnings.warn("no predictions supplied: coloring R-S plot rows by true class", stacklevel=2)
        pred = report.true_labels
    order = np.lexsort((np.arange(report.true_labels.shape[0]), report.true_labels))
    return [
        (int(i), int(report.true_labels[i]), int(pred[i]), float(report.residue[i]), float(report.similarity[i]))
        for i in order
    ]


def write_rs_csv(report: RsReport, path) -> None:
    """The `metrics rs` CLI payload: a CSV with one row per data point."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("index,true_class,predicted_class,residue,similarity\n")
        for idx, true_c, pred_c, res, sim in rs_plot_data(report):
            fh.write(f"{idx},{true_c},{pred_c},{res!r},{sim!r}\n")
