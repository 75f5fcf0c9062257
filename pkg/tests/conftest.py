import numpy as np
import pytest

from services.target_model import correlated_pair, independent_product, markov_triple, random_target
from utils.run_config import TargetLoader


@pytest.fixture
def rho_pair():
    return correlated_pair(0.5)


@pytest.fixture
def triple():
    """Coordinates 1 and 2 independent given coordinate 3"""
    return markov_triple(
        [0.4, 0.6],
        [[0.1, 0.9], [0.5, 0.5]],
        [[0.7, 0.3], [0.2, 0.8]],
    )


@pytest.fixture
def product_target():
    return independent_product([[0.3, 0.7], [0.2, 0.5, 0.3], [0.6, 0.4]])


@pytest.fixture
def random_222():
    return random_target([2, 2, 2], seed=7)


@pytest.fixture
def random_232():
    return random_target([2, 3, 2], seed=11)


@pytest.fixture(scope="session")
def loader():
    return TargetLoader()


@pytest.fixture
def rng():
    return np.random.default_rng(2024)
