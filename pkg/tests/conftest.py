import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from helpers import synthetic_molecule_dataset, write_dataset_csv  # noqa: E402

# Benchmark CSVs (smiles,label) are looked up here when a test needs the real
# published data; see README for how to provide them.
DATA_DIR = Path(__file__).resolve().parent.parent / "data"


def dataset_path(name: str) -> Path:
    return DATA_DIR / f"{name}.csv"


def require_dataset(name: str) -> Path:
    path = dataset_path(name)
    if not path.exists():
        pytest.skip(
            f"benchmark dataset {name}.csv not present under {DATA_DIR} "
            "(not downloadable in this environment; see README to supply it)"
        )
    return path


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def tiny_dataset_csv(tmp_path):
    smiles, labels = synthetic_molecule_dataset(40, seed=3)
    path = tmp_path / "tiny.csv"
    write_dataset_csv(path, smiles, labels)
    return path
