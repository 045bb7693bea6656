import os
from pathlib import Path

import pytest

from wsvgae.datasets import Dataset, load_dataset

REPO_ROOT = Path(__file__).resolve().parent.parent


def dataset_root() -> Path:
    """Registry directory: $WSVGAE_DATA or <repo>/data."""
    return Path(os.environ.get("WSVGAE_DATA", REPO_ROOT / "data"))


def try_dataset(dataset_id: str) -> Dataset | None:
    try:
        return load_dataset(dataset_root(), dataset_id)
    except (FileNotFoundError, OSError):
        return None


def require_dataset(dataset_id: str, features: bool = False) -> Dataset:
    """Load a registry dataset or skip the test with installation guidance."""
    dataset = try_dataset(dataset_id)
    if dataset is None:
        pytest.skip(
            f"dataset {dataset_id!r} is not installed under {dataset_root()} "
            "(this build environment has no route to the public archives); "
            "run tools/prepare_planetoid.py on the LINQS cora.tgz / citeseer.tgz "
            "to enable this check -- see README, section 'Datasets'"
        )
    if features and dataset.features is None:
        pytest.skip(f"dataset {dataset_id!r} is installed without its feature file")
    return dataset
