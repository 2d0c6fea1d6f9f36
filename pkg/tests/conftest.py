import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from markov_voi.markov import TransitionModel

settings.register_profile(
    "default", deadline=None, max_examples=40,
    suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def random_chain(rng, n, concentration=1.0):
    """Strictly positive chain with Dirichlet rows."""
    return TransitionModel.from_matrix(rng.dirichlet(np.full(n, concentration), size=n))


def random_partition(rng, n, m):
    return rng.dirichlet(np.ones(m), size=n)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def two_state():
    return TransitionModel.from_matrix([[0.9, 0.1], [0.1, 0.9]])
