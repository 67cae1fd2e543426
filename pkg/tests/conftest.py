import numpy as np
import pytest
from scipy.stats import unitary_group

from freqcomb import FrequencyComb


def haar_unitary(n: int, seed: int) -> np.ndarray:
    return unitary_group.rvs(n, random_state=seed)


@pytest.fixture
def comb2():
    """Two-line comb at 1 GHz FSR."""
    return FrequencyComb(2 * np.pi * 193.1e12, 2 * np.pi * 1e9, 2)


@pytest.fixture
def comb4():
    return FrequencyComb(2 * np.pi * 193.1e12, 2 * np.pi * 1e9, 4)


@pytest.fixture
def rng():
    return np.random.default_rng(20260810)


def random_state_vector(n: int, rng) -> np.ndarray:
    v = rng.normal(size=n) + 1j * rng.normal(size=n)
    return v / np.linalg.norm(v)
