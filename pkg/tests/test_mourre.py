import cmath
import math

import numpy as np
import pytest

from app.core.exceptions import PreconditionError
from app.models.sector import SectorGrid
from app.schemas.report import ItemStatus, Verdict
from app.services.mourre_service import (
    MourreService,
    cutoff,
    dilate,
    dilation_group_residual,
    in_dissipative_region,
)
from app.services.resolvent_service import ResolventService

Z = cmath.rect(0.5, math.pi / 12)
ITEMS = ["H1", "H2", "H3a", "H3b", "H3c", "H4a", "H4-nonneg", "H4b", "H4c", "H5"]


def test_cutoff_shape():
    x = np.array([0.0, 0.5, 1.0, 1.5, 2.0, 3.0])
    np.testing.assert_allclose(cutoff(x), [1.0, 1.0, 1.0, 0.5, 0.0, 0.0], atol=1e-15)
    np.testing.assert_array_equal(cutoff(-x), cutoff(x))
    values = cutoff(np.linspace(1.0, 2.0, 101))
    assert np.all(np.diff(values) <= 0)


def test_dissipative_region():
    assert in_dissipative_region(Z)
    assert not in_dissipative_region(0.3j)
    assert not in_dissipative_region(-0.1 + 0.01j)
    assert not in_dissipative_region(1.5 + 0.1j)


def test_commutator_identity_needs_dissipative_region(damped_profile, small_grid):
    with pytest.raises(PreconditionError):
        MourreService.commutator_identity_residual(damped_profile, small_grid, 0.3j)
    with pytest.raises(PreconditionError):
        MourreService.hypothesis_report(damped_profile, small_grid, 0.5j)


def test_commutator_identity_converges(damped_profile):
    grid = SectorGrid(d=3, ell=0, r_max=20.0, n=128)
    check = MourreService.identity_refinement(damped_profile, grid, cmath.rect(0.1, math.pi / 12))
    assert check.verdict == Verdict.CONSISTENT
    assert check.value >= 1.0


def test_remainder_vanishes_for_free_profile(free_profile, small_grid, rng):
    remainder = MourreService.commutator_remainder(free_profile, small_grid, Z)
    u = rng.standard_normal(small_grid.n)
    assert small_grid.norm(remainder.matvec(u)) == pytest.approx(0.0, abs=1e-12)


def test_dilation_group(small_grid):
    u = small_grid.sample(lambda r: np.exp(-(r - 6.0) ** 2))
    assert dilation_group_residual(small_grid, u, 0.3) < 1e-3
    assert small_grid.norm(dilate(small_grid, u, 0.3)) == pytest.approx(small_grid.norm(u), rel=1e-3)


def test_spectral_projector_commutes_with_real_part(damped_profile):
    grid = SectorGrid(d=3, ell=0, r_max=10.0, n=64)
    projector = MourreService.spectral_projector(damped_profile, grid, Z, 1 / 32)
    real_part = ResolventService.assemble_real_part(damped_profile, grid, Z).to_dense()
    commutator = projector @ real_part - real_part @ projector
    assert np.linalg.norm(commutator) <= 1e-8 * np.linalg.norm(real_part)


def test_positivity_rejects_wide_cutoff(free_profile, small_grid):
    with pytest.raises(PreconditionError):
        MourreService.mourre_positivity(free_profile, small_grid, Z, 1 / 16)


def test_free_positivity(free_profile):
    grid = SectorGrid(d=3, ell=0, r_max=200.0, n=2000)
    free = MourreService.mourre_positivity(free_profile, grid, Z, 1 / 32)
    assert free.window_size >= 1
    assert free.verdict == Verdict.CONSISTENT
    assert free.margin_ratio > 0


def test_k_bound_rho_range(damped_profile, small_grid):
    with pytest.raises(PreconditionError):
        MourreService.k_bound(damped_profile, small_grid, Z, rho=2.0)


def test_hypothesis_report(damped_profile):
    grid = SectorGrid(d=3, ell=0, r_max=20.0, n=128)
    report = MourreService.hypothesis_report(damped_profile, grid, cmath.rect(0.2, math.pi / 12))
    assert [item.name for item in report.items] == ITEMS
    assert report.status_of("H3c") == ItemStatus.SKIPPED
    assert report.status_of("H4c") == ItemStatus.SKIPPED
    for name in ("H1", "H4a", "H4-nonneg"):
        assert report.status_of(name) == ItemStatus.PASS
    with pytest.raises(KeyError):
        report.status_of("H6")
