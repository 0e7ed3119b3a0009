from pathlib import Path

import numpy as np
import pytest
import scipy.sparse as sp

from polyrisk.dataset import Dataset

DATA_DIR = Path(__file__).parent / "data"
ADULT9 = DATA_DIR / "adult9.libsvm.gz"


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def dense_dataset(X, y, name="t") -> Dataset:
    return Dataset(sp.csr_matrix(np.asarray(X, dtype=np.float64)), np.asarray(y), name)


def random_dataset(rng, m, n, density=1.0) -> Dataset:
    X = rng.normal(size=(m, n))
    if density < 1.0:
        X *= rng.random((m, n)) < density
        X[np.abs(X).sum(axis=1) == 0, 0] = 1.0
    y = rng.choice([-1, 1], size=m)
    return dense_dataset(X, y)
