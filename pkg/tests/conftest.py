import numpy as np
import pytest

from anderson_torus.anderson import Hamiltonian
from anderson_torus.noise import build_enhanced, sample_white_noise
from anderson_torus.spectral import Grid


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def grid16():
    return Grid(16)


@pytest.fixture(scope="session")
def enhanced16(grid16):
    return build_enhanced(sample_white_noise(grid16, 7), 2.0 / 16)


@pytest.fixture(scope="session")
def hamiltonian16(enhanced16):
    return Hamiltonian.from_enhanced(enhanced16)
