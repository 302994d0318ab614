import numpy as np
import pytest

from app.core.exceptions import PreconditionError, SupportError
from app.models.sector import SectorGrid
from app.models.wave import WaveState
from app.schemas.report import Verdict
from app.services.evolution_service import ENVELOPE_SLACK, CrankNicolsonStepper, EvolutionService

STEPS = 50


def bump(grid, radius):
    r = grid.nodes
    return np.where(r < radius, (1.0 - (r / radius) ** 2) ** 4, 0.0)


def stepped_energies(profile, grid, dt):
    stepper = CrankNicolsonStepper(profile, grid, dt)
    u = bump(grid, 2.0)
    v = np.zeros(grid.n)
    energies = []
    for _ in range(STEPS):
        state = WaveState(0.0, u, v, grid)
        energies.append(EvolutionService.modified_energy(profile, grid, state, nu=0.0))
        u, v = stepper.step(u, v)
    return energies


def test_crank_nicolson_conserves_free_energy(free_profile, small_grid):
    energies = stepped_energies(free_profile, small_grid, 0.05)
    np.testing.assert_allclose(energies, energies[0], rtol=1e-10)


def test_crank_nicolson_dissipates_damped_energy(damped_profile, small_grid):
    energies = stepped_energies(damped_profile, small_grid, 0.05)
    assert all(b <= a * (1 + 1e-12) for a, b in zip(energies, energies[1:]))
    assert energies[-1] < energies[0]


def test_stepper_rejects_bad_step(free_profile, small_grid):
    with pytest.raises(PreconditionError):
        CrankNicolsonStepper(free_profile, small_grid, 0.0)


def test_evolve_preconditions(damped_profile, small_grid):
    f, g = bump(small_grid, 1.0), np.zeros(small_grid.n)
    with pytest.raises(PreconditionError):
        EvolutionService.evolve(damped_profile, small_grid, f, g, [2.0, 1.0])
    # speed bound 1.3 carries the support past r_max = 20
    with pytest.raises(SupportError):
        EvolutionService.evolve(damped_profile, small_grid, f, g, [0.0, 20.0])


def test_evolve_starts_at_data(damped_profile, small_grid):
    f, g = bump(small_grid, 1.0), 0.3 * bump(small_grid, 1.0)
    states = EvolutionService.evolve(damped_profile, small_grid, f, g, [0.0, 1.0], verify_step=False)
    assert [s.t for s in states] == [0.0, 1.0]
    np.testing.assert_array_equal(states[0].u, f)
    np.testing.assert_allclose(states[0].v, damped_profile.w(small_grid.nodes) * g)


def test_energy_envelope(damped_profile, small_grid):
    f, g = bump(small_grid, 1.0), np.zeros(small_grid.n)
    states = EvolutionService.evolve(damped_profile, small_grid, f, g, [0.0, 1.0, 2.0, 3.0, 4.0], verify_step=False)
    assert EvolutionService.energy_envelope(damped_profile, small_grid, states, 0.1) <= ENVELOPE_SLACK


def test_free_data_is_identity_for_free_profile(free_profile, small_grid):
    f, g = bump(small_grid, 1.0), 0.5 * bump(small_grid, 2.0)
    f0, g0 = EvolutionService.free_data(free_profile, small_grid, f, g)
    np.testing.assert_array_equal(f0, f)
    np.testing.assert_array_equal(g0, g)


def test_profile_comparison(damped_profile):
    grid = SectorGrid(d=3, ell=0, r_max=40.0, n=512)
    f, g = bump(grid, 1.0), np.zeros(grid.n)
    report = EvolutionService.profile_comparison(
        damped_profile, grid, f, g, delta=5.0, t_grid=[2.0, 4.0, 6.0, 8.0], rho1=0.5, t_lo=2.0,
    )
    assert report.label == "profile-compare"
    assert all(len(values) == 4 for values in report.series.values())
    assert [fit.name for fit in report.fits][:2] == ["norm_local", "norm_diff"]
    assert any("d + 5/2" in note for note in report.notes)
    assert isinstance(report.ratio_monotone, bool)


def test_synthesis_preconditions(damped_profile, small_grid):
    f, g = bump(small_grid, 1.0), np.zeros(small_grid.n)
    with pytest.raises(PreconditionError):
        EvolutionService.mu_independence(damped_profile, small_grid, f, g, [0.5], [1.0])
    with pytest.raises(PreconditionError):
        EvolutionService.synthesize(damped_profile, small_grid, f, g, 0.0, [1.0])


def test_synthesis_matches_time_stepping(free_profile):
    grid = SectorGrid(d=3, ell=0, r_max=20.0, n=256)
    f, g = bump(grid, 1.0), np.zeros(grid.n)
    report = EvolutionService.fourier_synthesis_crosscheck(free_profile, grid, f, g, 0.5, [2.0])
    assert report.max_deviation < 0.05
    assert report.verdict != Verdict.VIOLATION
