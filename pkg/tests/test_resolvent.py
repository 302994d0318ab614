import numpy as np
import pytest

from app.core.exceptions import PreconditionError
from app.models.resolvent import FactorKind, ResolventProduct, SlotKind
from app.models.sector import SectorGrid
from app.schemas.report import Verdict
from app.services.calculus_service import ProductCalculus
from app.services.identity_service import IdentityService
from app.services.operator_service import OperatorService
from app.services.resolvent_service import ResolventEngine, ResolventService, SectorResolvent

SEED = 20240601
Z = 0.3 + 0.4j
TOL = 1e-10


def random_vector(grid, rng):
    return rng.standard_normal(grid.n) + 1j * rng.standard_normal(grid.n)


def test_pz_requires_upper_half_plane(damped_profile, small_grid):
    with pytest.raises(PreconditionError):
        ResolventService.assemble_pz(damped_profile, small_grid, 0.5)
    with pytest.raises(PreconditionError):
        ResolventEngine(damped_profile, small_grid, Z, z_prime=0.2 - 0.1j)


def test_pz_splits_into_real_part(damped_profile, small_grid, rng):
    # P(z) = P_R(z) - i (Re(z) a w + Im(z^2) w)
    u = random_vector(small_grid, rng)
    nodes = small_grid.nodes
    pz = ResolventService.assemble_pz(damped_profile, small_grid, Z).matvec(u)
    real_part = ResolventService.assemble_real_part(damped_profile, small_grid, Z).matvec(u)
    rest = -1j * (Z.real * damped_profile.aw(nodes) + (Z * Z).imag * damped_profile.w(nodes)) * u
    np.testing.assert_allclose(pz, real_part + rest, rtol=1e-12, atol=1e-12)


def test_sector_resolvent_solves(damped_profile, small_grid, rng):
    operator = ResolventService.assemble_pz(damped_profile, small_grid, Z)
    resolvent = SectorResolvent(operator)
    rhs = random_vector(small_grid, rng)
    x = resolvent.solve(rhs)
    y = resolvent.solve_adjoint(rhs)
    assert small_grid.norm(operator.matvec(x) - rhs) <= TOL * small_grid.norm(rhs)
    assert small_grid.norm(operator.adjoint().matvec(y) - rhs) <= TOL * small_grid.norm(rhs)
    np.testing.assert_array_equal(resolvent.solve(np.zeros(small_grid.n)), 0)


def test_engine_adjoint_action(damped_profile, small_grid, rng):
    engine = ResolventEngine(damped_profile, small_grid, Z)
    products = ProductCalculus.derivative_terms(2)
    u, v = random_vector(small_grid, rng), random_vector(small_grid, rng)
    lhs = small_grid.inner(engine.apply_sum(products, u), v)
    rhs = small_grid.inner(u, engine.apply_sum_adjoint(products, v))
    assert abs(lhs - rhs) <= 1e-9 * abs(lhs)


def test_engine_rejects_mixed_bindings(damped_profile, small_grid, rng):
    engine = ResolventEngine(damped_profile, small_grid, Z, z_prime=0.1 + 0.2j)
    mixed = ResolventProduct((SlotKind.PERTURBED_IR, SlotKind.PERTURBED_Z), (FactorKind.GAMMA2,))
    with pytest.raises(PreconditionError):
        engine.apply(mixed, random_vector(small_grid, rng))


def test_free_factors_and_theta_vanish_for_free_profile(free_profile, small_grid, rng):
    u = random_vector(small_grid, rng)
    for sigma in (0, 1, 2):
        theta = ResolventService.assemble_factor(FactorKind.theta(sigma), free_profile, small_grid, Z)
        assert small_grid.norm(theta.matvec(u)) == 0.0
    gamma = ResolventService.assemble_factor(FactorKind.GAMMA1, free_profile, small_grid, Z).matvec(u)
    free = ResolventService.assemble_factor(FactorKind.GAMMA1_FREE, free_profile, small_grid, Z).matvec(u)
    np.testing.assert_allclose(gamma, free, atol=1e-14)


def test_free_resolvent_norm_on_imaginary_axis(free_profile, small_grid):
    # R_0(0.5 i) = (-Delta + 1/4)^{-1} is positive selfadjoint
    lowest = OperatorService.free_spectrum(small_grid).eigenvalues[0]
    sample = ResolventService.weighted_norm(
        free_profile, small_grid, ProductCalculus.derivative_terms(0, free=True), 0.5j, tol=1e-10, max_iter=2000,
    )
    assert sample.norm == pytest.approx(1.0 / (lowest + 0.25), rel=1e-6)
    assert sample.ell_argmax == 0


def test_weighted_norm_scans_sectors(damped_profile, small_grid):
    sample = ResolventService.weighted_norm(
        damped_profile, small_grid, ProductCalculus.derivative_terms(0), Z,
        delta_left=1.6, delta_right=1.6, ell_max=1,
    )
    assert len(sample.per_ell) == 2
    assert sample.norm == max(sample.per_ell) > 0
    with pytest.raises(PreconditionError):
        ResolventService.weighted_norm(damped_profile, small_grid, [], Z, delta_left=-1.0)


def test_solve_roundtrip(damped_profile, small_grid):
    assert IdentityService.solve_roundtrip(damped_profile, small_grid, Z, SEED).verdict == Verdict.CONSISTENT


def test_difference_identity(damped_profile, small_grid):
    assert IdentityService.difference_identity(damped_profile, small_grid, Z, SEED).verdict == Verdict.CONSISTENT


@pytest.mark.parametrize("z", [Z, -0.2 + 0.05j, 0.7j])
def test_adjoint_law(damped_profile, z):
    check = IdentityService.adjoint_law(damped_profile, 3, z, n=64, r_max=10.0)
    assert check.verdict == Verdict.CONSISTENT


def test_expansion_identities(damped_profile, small_grid):
    checks = IdentityService.expansion_identities(damped_profile, small_grid, Z, SEED, max_depth=2, max_k=1)
    # chains R, R g1 R and R g0 R at depths 0..2
    assert len(checks) == 9
    assert all(check.verdict == Verdict.CONSISTENT for check in checks)


def test_theta_consistency(damped_profile, small_grid):
    checks = IdentityService.theta_consistency(damped_profile, small_grid, Z, SEED)
    assert [c.verdict for c in checks] == [Verdict.CONSISTENT, Verdict.CONSISTENT]


@pytest.mark.parametrize("free", [False, True])
def test_derivative_oracle(damped_profile, small_grid, free):
    rhs = IdentityService.random_rhs(small_grid, SEED)
    for n in (1, 2):
        gap = ResolventService.derivative_oracle(damped_profile, small_grid, Z, n, rhs, free=free)
        assert gap < 1e-6
    with pytest.raises(PreconditionError):
        ResolventService.derivative_oracle(damped_profile, small_grid, Z, 0, rhs)


def test_coercivity_in_d_i(damped_profile, small_grid):
    assert IdentityService.coercivity(damped_profile, small_grid, Z, SEED).value > 0


def test_cap_potential_lives_in_outer_layer(small_grid):
    cap = ResolventService.cap_potential(small_grid, 2.0)
    assert np.all(cap[small_grid.nodes < 0.85 * small_grid.r_max] == 0)
    assert cap[-1] == pytest.approx(2.0 * ((small_grid.nodes[-1] - 17.0) / 3.0) ** 2)


def test_identity_suite_on_free_profile(free_profile):
    grid = SectorGrid(d=3, ell=0, r_max=20.0, n=128)
    checks = IdentityService.run_all(free_profile, grid, Z, SEED, max_depth=1, max_order=2, adjoint_n=64)
    assert all(check.verdict == Verdict.CONSISTENT for check in checks), [c.name for c in checks
                                                                          if c.verdict != Verdict.CONSISTENT]
