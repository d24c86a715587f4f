import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from funcate.funcdata import trapezoid_grid
from funcate.simgen import run_rng, simulate_dataset

settings.register_profile("funcate", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("funcate")


@pytest.fixture(scope="session")
def grid101():
    return trapezoid_grid(101)


@pytest.fixture(scope="session")
def psm1_data():
    """One PSM 1 / OM 1 dataset with n = 300."""
    return simulate_dataset(1, 1, 300, run_rng(11, 0)).data


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)

