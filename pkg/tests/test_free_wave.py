import numpy as np
import pytest

from app.core.exceptions import PreconditionError, SupportError
from app.models.sector import SectorGrid
from app.services.free_wave_service import FreeWaveService


def bump(grid, radius):
    r = grid.nodes
    return np.where(r < radius, (1.0 - (r / radius) ** 2) ** 4, 0.0)


@pytest.fixture
def huygens_grid():
    return SectorGrid(d=3, ell=0, r_max=10.0, n=2048)


def test_spectral_energy_is_conserved(small_grid):
    f = bump(small_grid, 2.0)
    g = np.zeros(small_grid.n)
    propagator = FreeWaveService.propagator(small_grid)
    start = propagator.energy(propagator.solve(f, g, 0.0))
    later = propagator.energy(propagator.solve(f, g, 5.0))
    assert later == pytest.approx(start, rel=1e-10)


def test_free_solution_starts_at_data(small_grid):
    f = bump(small_grid, 2.0)
    g = 0.5 * bump(small_grid, 1.0)
    state = FreeWaveService.free_solution(small_grid, f, g, 0.0)
    np.testing.assert_allclose(state.u, f, atol=1e-10)
    np.testing.assert_allclose(state.v, g, atol=1e-10)
    with pytest.raises(SupportError):
        FreeWaveService.free_solution(small_grid, f, g, 18.5)


def test_support_radius(huygens_grid):
    radius = FreeWaveService.support_radius(huygens_grid, [bump(huygens_grid, 1.0), np.zeros(huygens_grid.n)])
    assert radius == pytest.approx(1.0, abs=2 * huygens_grid.h)
    assert FreeWaveService.support_radius(huygens_grid, [np.zeros(huygens_grid.n)]) == 0.0


def test_strong_huygens_principle(huygens_grid):
    f = bump(huygens_grid, 1.0)
    g = np.zeros(huygens_grid.n)
    # the wave has left B(1) once t >= 2
    assert FreeWaveService.huygens_residual(huygens_grid, f, g, 3.0, 1.0) < 1e-3
    assert FreeWaveService.huygens_residual(huygens_grid, f, g, 0.5, 1.0) > 0.1


def test_huygens_preconditions(huygens_grid):
    even = SectorGrid(d=4, ell=0, r_max=10.0, n=256)
    with pytest.raises(PreconditionError):
        FreeWaveService.huygens_residual(even, bump(even, 1.0), np.zeros(even.n), 3.0, 1.0)
    with pytest.raises(SupportError):
        FreeWaveService.huygens_residual(huygens_grid, bump(huygens_grid, 2.0), np.zeros(huygens_grid.n), 5.0, 1.0)


def test_local_decay_in_even_dimension():
    grid = SectorGrid(d=4, ell=0, r_max=60.0, n=1024)
    f, g = bump(grid, 1.0), bump(grid, 1.0)
    report = FreeWaveService.local_decay(grid, f, g, 1.0, [8.0, 12.0, 16.0, 24.0, 32.0], experiment_id="free")
    assert report.label == "free"
    assert [fit.name for fit in report.fits] == ["cos_local", "sin_local"]
    cos_series = report.series["cos_local"]
    assert cos_series[-1] < cos_series[0] / 10
    with pytest.raises(SupportError):
        FreeWaveService.local_decay(grid, f, g, 1.0, [8.0, 64.0])
