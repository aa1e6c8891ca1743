"""Dataset and feature-matrix loading, standardization, and labeled/unlabeled splits."""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class DataFormatError(ValueError):
    """Raised when an input file violates the documented CSV contracts."""


@dataclass(frozen=True)
class Dataset:
    """A classification dataset: SMILES strings paired with integer class labels.

    Labels are class indices in {0, ..., n_classes-1}; n_classes is inferred
    as max(label) + 1 so that class indices with zero members are representable
    (they trigger a warning at load time).
    """

    smiles: tuple[str, ...]
    labels: np.ndarray
    name: str = ""

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int64)
        labels.flags.writeable = False
        object.__setattr__(self, "labels", labels)
        if len(self.smiles) == 0:
            raise DataFormatError("empty dataset")
        if len(self.smiles) != len(labels):
            raise DataFormatError(
                f"{len(self.smiles)} SMILES strings but {len(labels)} labels"
            )
        if labels.min() < 0:
            raise DataFormatError("labels must be non-negative class indices")
        if self.n_classes < 2:
            raise DataFormatError("dataset has a single class; need at least 2")

    @property
    def n(self) -> int:
        return len(self.smiles)

    @property
    def n_classes(self) -> int:
        return int(self.labels.max()) + 1


@dataclass(frozen=True)
class FeatureMatrix:
    """An n_samples x n_features real matrix, optionally standardized."""

    values: np.ndarray
    standardized: bool = False

    def __post_init__(self):
        values = np.ascontiguousarray(self.values, dtype=np.float64)
        if values.ndim != 2 or values.shape[1] == 0:
            raise DataFormatError("feature matrix must be 2-D with at least one column")
        if not np.isfinite(values).all():
            raise DataFormatError("feature matrix contains non-finite entries")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


@dataclass(frozen=True)
class SplitSpec:
    """One labeled/unlabeled split: a 0/1 indicator over the n data points.

    gamma[i] == 1 marks point i as labeled. `seed` is the per-split seed the
    indicator was drawn from, so a split can be reproduced in isolation.
    """

    gamma: np.ndarray
    labeled_count: int
    seed: int

    def __post_init__(self):
        gamma = np.asarray(self.gamma, dtype=np.uint8)
        gamma.flags.writeable = False
        object.__setattr__(self, "gamma", gamma)
        n = gamma.shape[0]
        if not 1 <= self.labeled_count < n:
            raise ValueError(f"labeled_count={self.labeled_count} out of range for n={n}")
        if int(gamma.sum()) != self.labeled_count:
            raise ValueError("gamma does not sum to labeled_count")

    @property
    def n(self) -> int:
        return self.gamma.shape[0]

    @property
    def labeled_indices(self) -> np.ndarray:
        return np.flatnonzero(self.gamma == 1)

    @property
    def unlabeled_indices(self) -> np.ndarray:
        return np.flatnonzero(self.gamma == 0)


def load_dataset(path: str | Path, name: str | None = None) -> Dataset:
    """Load a dataset CSV with header ``smiles,label``.

    Labels must parse as non-negative integers. Row order is preserved.
    Raises DataFormatError with the offending line number on malformed rows,
    and warns if some class index below max(label) has zero members.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"dataset file not found: {path}")
    smiles: list[str] = []
    labels: list[int] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFormatError(f"{path}: empty dataset") from None
        if [c.strip().lower() for c in header] != ["smiles", "label"]:
            raise DataFormatError(
                f"{path}: expected header 'smiles,label', got {','.join(header)!r}"
            )
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise DataFormatError(f"{path}:{lineno}: expected 2 columns, got {len(row)}")
            smi, lab = row[0].strip(), row[1].strip()
            if not smi:
                raise DataFormatError(f"{path}:{lineno}: empty SMILES string")
            try:
                lab_int = int(lab)
            except ValueError:
                raise DataFormatError(f"{path}:{lineno}: label {lab!r} is not an integer") from None
            if lab_int < 0:
                raise DataFormatError(f"{path}:{lineno}: label {lab_int} is negative")
            smiles.append(smi)
            labels.append(lab_int)
    if not smiles:
        raise DataFormatError(f"{path}: empty dataset")
    labels_arr = np.asarray(labels, dtype=np.int64)
    present = np.unique(labels_arr)
    n_classes = int(labels_arr.max()) + 1
    if len(present) < n_classes:
        missing = sorted(set(range(n_classes)) - set(present.tolist()))
        warnings.warn(f"{path}: class indices with zero members: {missing}", stacklevel=2)
    return Dataset(smiles=tuple(smiles), labels=labels_arr, name=name or path.stem)


def save_dataset(dataset: Dataset, path: str | Path) -> None:
    """Write a dataset back to the ``smiles,label`` CSV format."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write("smiles,label\n")
        for smi, lab in zip(dataset.smiles, dataset.labels):
            fh.write(f"{smi},{int(lab)}\n")


def load_feature_matrix(path: str | Path, expected_rows: int) -> FeatureMatrix:
    """Load a headerless CSV of real numbers, one row per data point.

    The row count must equal `expected_rows`; ragged rows and non-numeric
    cells are reported with their line number.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"feature file not found: {path}")
    try:
        values = np.loadtxt(path, delimiter=",", ndmin=2, dtype=np.float64)
    except ValueError:
        _diagnose_feature_file(path)  # raises with a line number
        raise
    if values.size == 0:
        raise DataFormatError(f"{path}: empty feature matrix")
    if values.shape[0] != expected_rows:
        raise DataFormatError(
            f"{path}: row-count mismatch: file has {values.shape[0]} rows, expected {expected_rows}"
        )
    if not np.isfinite(values).all():
        bad = int(np.argwhere(~np.isfinite(values))[0, 0]) + 1
        raise DataFormatError(f"{path}:{bad}: non-finite value in feature matrix")
    return FeatureMatrix(values=values, standardized=False)


def _diagnose_feature_file(path: Path) -> None:
    # Slow second pass, only entered when np.loadtxt fails: find the first bad line.
    width = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            cells = line.split(",")
            if width is None:
                width = len(cells)
            elif len(cells) != width:
                raise DataFormatError(
                    f"{path}:{lineno}: ragged row ({len(cells)} cells, expected {width})"
                )
            for cell in cells:
                try:
                    float(cell)
                except ValueError:
                    raise DataFormatError(f"{path}:{lineno}: non-numeric cell {cell!r}") from None
    raise DataFormatError(f"{path}: malformed feature matrix")


def standardize_features(features: FeatureMatrix) -> FeatureMatrix:
    """Scale each column to zero mean and unit variance.

    Uses the population convention (divide by n, not n-1). Columns with zero
    variance map to all-zero columns rather than raising.
    """
    if features.standardized:
        raise ValueError("feature matrix is already standardized")
    values = features.values
    mean = values.mean(axis=0)
    std = values.std(axis=0)  # ddof=0: population convention
    safe = np.where(std > 0, std, 1.0)
    out = (values - mean) / safe
    out[:, std == 0] = 0.0
    return FeatureMatrix(values=out, standardized=True)


def _child_seed(seed: int, index: int) -> int:
    """Derive a portable per-item seed from (seed, index) via SeedSequence."""
    ss = np.random.SeedSequence([int(seed), int(index)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def generate_splits(
    n: int,
    labeled_count: int,
    num_splits: int,
    seed: int,
    stratified: bool = False,
    labels: np.ndarray | None = None,
) -> list[SplitSpec]:
    """Draw `num_splits` labeled/unlabeled splits of n points.

    Each split marks exactly `labeled_count` points as labeled, chosen
    uniformly at random without replacement. The RNG is PCG64 seeded through
    numpy's SeedSequence, so splits reproduce across platforms. With
    ``stratified=True`` the labeled budget is allocated to classes
    proportionally (largest-remainder rounding) before sampling within each
    class; the default is unstratified.
    """
    if not 1 <= labeled_count < n:
        raise ValueError(f"labeled_count must satisfy 1 <= labeled_count < n, got {labeled_count} for n={n}")
    if num_splits < 1:
        raise ValueError("num_splits must be >= 1")
    if stratified and labels is None:
        raise ValueError("stratified splits require labels")
    splits = []
    for i in range(num_splits):
        split_seed = _child_seed(seed, i)
        rng = np.random.Generator(np.random.PCG64(split_seed))
        if stratified:
            chosen = _stratified_choice(rng, np.asarray(labels), labeled_count)
        else:
            chosen = rng.choice(n, size=labeled_count, replace=False)
        gamma = np.zeros(n, dtype=np.uint8)
        gamma[chosen] = 1
        splits.append(SplitSpec(gamma=gamma, labeled_count=labeled_count, seed=split_seed))
    return splits


def _stratified_choice(rng: np.random.Generator, labels: np.ndarray, labeled_count: int) -> np.ndarray:
    n = labels.shape[0]
    classes = np.unique(labels)
    quotas = {}
    fractional = []
    total = 0
    for k in classes:
        exact = labeled_count * int((labels == k).sum()) / n
        quotas[int(k)] = int(math.floor(exact))
        total += quotas[int(k)]
        fractional.append((-(exact - math.floor(exact)), int(k)))
    fractional.sort()
    for _, k in fractional[: labeled_count - total]:
        quotas[k] += 1
    chosen = []
    for k in classes:
        members = np.flatnonzero(labels == k)
        take = min(quotas[int(k)], members.shape[0])
        if take > 0:
            chosen.append(rng.choice(members, size=take, replace=False))
    out = np.concatenate(chosen) if chosen else np.empty(0, dtype=np.int64)
    # Proportional rounding can undershoot when a class is exhausted; top up uniformly.
    if out.shape[0] < labeled_count:
        rest = np.setdiff1d(np.arange(n), out)
        extra = rng.choice(rest, size=labeled_count - out.shape[0], replace=False)
        out = np.concatenate([out, extra])
    return out


def default_num_splits(labeled_fraction: float) -> int:
    """Benchmark protocol default: 50 splits at fractions <= 5%, else 10."""
    return 50 if labeled_fraction <= 0.05 else 10


def labeled_count_for_fraction(n: int, labeled_fraction: float) -> int:
    """ceil(fraction * n), guaranteeing at least one labeled point."""
    if not 0.0 < labeled_fraction < 1.0:
        raise ValueError("labeled_fraction must be in (0, 1)")
    return max(1, math.ceil(labeled_fraction * n))
