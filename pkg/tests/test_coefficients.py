import numpy as np
import pytest

from app.core.exceptions import ProfileError, SeminormDivergenceError
from app.models.profile import BracketPower, GaussianBump
from app.schemas.profile import BumpConfig, ProfileConfig
from app.services.coefficient_service import CoefficientService

TOL = 1e-12
FD_TOL = 1e-6


@pytest.mark.parametrize("options", [
    dict(d=2),
    dict(rho0=1.5),
    dict(rho0=0.5, rho1=0.6),
    dict(g_amp=0.6),
    dict(w_amp=-0.7),
    dict(a_amp=-0.1),
])
def test_profile_rejects_broken_hypotheses(options):
    with pytest.raises(ProfileError):
        CoefficientService.build_profile(ProfileConfig(**options))


def test_profile_rejects_negative_density_bump():
    config = ProfileConfig(bumps=[BumpConfig(target="w", center=5.0, width=3.0, height=-2.0)])
    with pytest.raises(ProfileError, match="w must be positive"):
        CoefficientService.build_profile(config)


def test_rho1_defaults_to_half_rho0():
    assert ProfileConfig(rho0=0.8).rho1 == pytest.approx(0.4)


def test_free_profile(free_profile):
    r = np.linspace(0.0, 50.0, 101)
    assert free_profile.is_free and free_profile.is_undamped
    np.testing.assert_allclose(free_profile.g(r), 1.0, atol=TOL)
    np.testing.assert_allclose(free_profile.w(r), 1.0, atol=TOL)
    np.testing.assert_allclose(free_profile.a(r), 0.0, atol=TOL)


def test_bracket_power_derivatives_match_differences():
    fn = BracketPower(0.7, 1.3)
    r = np.linspace(0.1, 20.0, 50)
    step = 1e-5
    first = (fn(r + step) - fn(r - step)) / (2 * step)
    second = (fn.derivative(r + step, 1) - fn.derivative(r - step, 1)) / (2 * step)
    np.testing.assert_allclose(fn.derivative(r, 1), first, rtol=FD_TOL, atol=FD_TOL)
    np.testing.assert_allclose(fn.derivative(r, 2), second, rtol=FD_TOL, atol=FD_TOL)


def test_gaussian_bump_is_even():
    bump = GaussianBump(center=2.0, width=0.5, height=1.0)
    assert abs(float(bump.derivative(np.array([0.0]), 1)[0])) < TOL
    np.testing.assert_allclose(bump(np.array([0.3])), bump(np.array([-0.3])), atol=TOL)


def test_hypothesis_constants(damped_profile):
    constants = CoefficientService.hypothesis_constants(damped_profile)
    # (g-1) + (w-1) = 0.5 <r>^{-1}, a <r>^2 = 0.5 exactly
    assert constants.decay_metric == pytest.approx(0.5)
    assert constants.decay_damping == pytest.approx(0.5)
    assert constants.c_g == pytest.approx(1.2)
    assert constants.c_w == pytest.approx(1.3)
    assert constants.speed_bound == max(constants.c_g, constants.c_w)


def test_seminorm_of_symbol():
    estimate = CoefficientService.seminorm(BracketPower(1.0, 1.0), kappa=1.0, d=3)
    assert estimate.max_order == 2
    # <r>^3 |d^2 <r>^{-1}| tends to 2
    assert estimate.value == pytest.approx(2.0, rel=1e-6)
    assert len(estimate.per_order) == 3


def test_seminorm_diverges_outside_symbol_class():
    with pytest.raises(SeminormDivergenceError):
        CoefficientService.seminorm(BracketPower(1.0, 1.0), kappa=2.0, d=3)


def test_seminorm_rejects_negative_order():
    with pytest.raises(ValueError):
        CoefficientService.seminorm(BracketPower(1.0, 1.0), kappa=-1.0)
