import numpy as np
import pytest

from nahmlab import dirac, fixtures, torus


@pytest.fixture
def rng():
    return np.random.default_rng(0xA11CE)


@pytest.fixture(scope="session")
def cubic():
    return fixtures.cubic_lattice()


@pytest.fixture(scope="session")
def cubic_dual(cubic):
    return torus.dual_lattice(cubic)


@pytest.fixture(scope="session")
def clifford():
    return dirac.default_clifford()
