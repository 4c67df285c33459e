import numpy as np
import pytest

from aerobench.model import linearize
from aerobench.plant import PlantParams


@pytest.fixture(scope="session")
def default_params():
    return PlantParams()


@pytest.fixture(scope="session")
def beam_model(default_params):
    return linearize(default_params)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
