import numpy as np
import pytest

from gcvfilter.checks import random_model
from gcvfilter.statespace import StateSpaceModel


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def scalar_model(A=1.0, C=1.0, Q=1.0, gamma=1.0, P0=1.0, mu=0.0) -> StateSpaceModel:
    return StateSpaceModel([[A]], [C], [[Q]], [mu], [[P0]], gamma)


@pytest.fixture
def random_walk():
    return scalar_model()


@pytest.fixture
def model_battery():
    """Random models with dims 1-4, stable A, nonzero prior means."""
    rng = np.random.default_rng(2024)
    return [random_model(rng) for _ in range(12)]
