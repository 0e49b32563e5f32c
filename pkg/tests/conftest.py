import numpy as np
import pytest

from chaosrom.dynamics import DatasetConfig, generate_dataset


@pytest.fixture(scope="session")
def l96_1000():
    """N=1000, K=1 Lorenz '96 training set (shared: generation takes a few seconds)."""
    return generate_dataset(DatasetConfig(n_points=1000, rollout=1))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
