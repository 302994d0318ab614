import numpy as np
import pytest

from app.models.sector import SectorGrid
from app.schemas.profile import ProfileConfig
from app.services.coefficient_service import CoefficientService

SEED = 20240601


@pytest.fixture
def free_profile():
    return CoefficientService.build_profile(ProfileConfig(d=3, rho0=1.0))


@pytest.fixture
def damped_profile():
    return CoefficientService.build_profile(ProfileConfig(d=3, rho0=1.0, g_amp=0.2, w_amp=0.3, a_amp=0.5))


@pytest.fixture
def small_grid():
    return SectorGrid(d=3, ell=0, r_max=20.0, n=256)


@pytest.fixture
def rng():
    return np.random.default_rng(SEED)
