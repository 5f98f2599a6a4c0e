import numpy as np
import pytest

from slabspike.model_core import Dataset, standardize


@pytest.fixture
def small_data():
    """Standardized 12 x 3 dataset with one real predictor, no U block."""
    rng = np.random.default_rng(42)
    X = rng.standard_normal((12, 3))
    y = 0.9 * X[:, 0] + rng.standard_normal(12)
    return standardize(Dataset(y, X, np.zeros((12, 0)), ("a", "b", "c")))


@pytest.fixture
def medium_data():
    """Standardized 48 x 6 dataset with two strong real predictors."""
    rng = np.random.default_rng(7)
    X = rng.standard_normal((48, 6))
    y = 1.1 * X[:, 0] - 0.8 * X[:, 2] + rng.standard_normal(48) * 0.6
    names = tuple(f"x{i}" for i in range(6))
    return standardize(Dataset(y, X, np.zeros((48, 0)), names))
