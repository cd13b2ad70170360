import numpy as np
import pytest

from qmefix.model_jc import JcParams
from qmefix.model_rlm import RlmParams


@pytest.fixture
def jc_over():
    """Overdamped Jaynes-Cummings parameters (gamma = 1 units)."""
    return JcParams.from_ratio(0.495, eps=1.0)


@pytest.fixture
def jc_under():
    """Underdamped Jaynes-Cummings parameters with fast level splitting."""
    return JcParams.from_ratio(13.0, eps=20.0)


@pytest.fixture
def rlm():
    """Resonant level at low temperature, ``eps - mu = 2 pi Gamma``."""
    return RlmParams(Gamma=1.0, T=0.1 / (2 * np.pi), eps=2 * np.pi)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
