import numpy as np
import pytest

from gelfand.greens import Domain
from gelfand.reduced import HomogeneousPoly, build_admissible_potential


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running numerical experiment")


@pytest.fixture(scope="session")
def coarse_disk():
    return Domain.unit_disk(1 / 32)


@pytest.fixture(scope="session")
def cubic_potential(coarse_disk):
    return build_admissible_potential(coarse_disk, HomogeneousPoly.cubic_example(1.0), 2)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
