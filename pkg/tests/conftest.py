import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))  # make oracles importable

from vqclab.space import Configuration, default_space, sample_configuration

REPO_ROOT = Path(__file__).resolve().parent.parent
DATA_DIR = REPO_ROOT / "data"
GOLDEN_DIR = Path(__file__).resolve().parent / "golden"


@pytest.fixture(scope="session")
def space():
    return default_space()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_config(seed: int) -> Configuration:
    return sample_configuration(default_space(), np.random.default_rng(seed))


@pytest.fixture(scope="session")
def blobs_dataset():
    """Seeded separable 2-d binary set: two Gaussian blobs, 200 points."""
    r = np.random.default_rng(2024)
    n = 100
    X = np.vstack(
        [r.normal([-1.2, -1.2], 0.8, (n, 2)), r.normal([1.2, 1.2], 0.8, (n, 2))]
    )
    y = np.array([0] * n + [1] * n)
    perm = r.permutation(2 * n)
    X, y = X[perm], y[perm]
    mean, std = X[:160].mean(axis=0), X[:160].std(axis=0)
    Xs = (X - mean) / std
    return (Xs[:160], y[:160]), (Xs[160:], y[160:])
