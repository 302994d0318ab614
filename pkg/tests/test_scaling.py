import math

import pytest
from pydantic import ValidationError

from app.core.exceptions import PreconditionError
from app.models.sector import SectorGrid
from app.schemas.report import ScalingReport, ScalingSample, Verdict
from app.schemas.scan import PowerSettings, ScanSpec, ScanTarget
from app.services.scaling_service import (
    ScalingService,
    default_delta,
    predicted_exponent,
    ray_samples,
    summarize_scan,
    theta_window,
)

WEIGHT_SAMPLES = [1e-3, 2e-3, 4e-3, 8e-3]


def test_predicted_exponents():
    assert predicted_exponent(3, 0) == 0
    assert predicted_exponent(3, 2) == -1
    assert predicted_exponent(5, 1) == 0
    assert predicted_exponent(3, 2, rho1=0.5, difference=True) == pytest.approx(-0.5)
    assert default_delta(2) == pytest.approx(3.6)


def test_theta_window():
    assert theta_window(0, 3, 0.25) == (-1.25, 1.5)
    assert theta_window(2, 3, 0.25) == (-0.25, 2.5)
    with pytest.raises(PreconditionError):
        theta_window(3, 3, 0.25)


def test_ray_samples_are_geometric():
    samples = ray_samples(1e-3, 1e-1, 3)
    assert samples == pytest.approx([1e-3, 1e-2, 1e-1])


def test_build_resolvent_scan():
    scan = ScalingService.build_resolvent_scan(3, 1, ScanTarget.DIFFERENCE, rho1=0.5)
    assert scan.delta_left == scan.delta_right == pytest.approx(2.6)
    assert scan.predicted_exponent == pytest.approx(0.0)
    assert scan.label == "difference-n1"
    assert len(ScalingService.products_for(ScanTarget.FREE_DERIVATIVE, 2)) == 2


@pytest.mark.parametrize("samples", [[0.1, 0.05], [0.0, 0.1], [0.5, 2.0]])
def test_scan_spec_rejects_bad_samples(samples):
    with pytest.raises(ValidationError):
        ScanSpec(target=ScanTarget.DERIVATIVE, r_samples=samples, delta_left=1.6, delta_right=1.6,
                 predicted_exponent=0.0)


def test_weight_scan_recovers_sobolev_index():
    grid = SectorGrid(d=3, ell=0, r_max=20.0, n=128)
    report = ScalingService.scan_weight(grid, 0.5, 1.0, WEIGHT_SAMPLES)
    assert report.verdict == Verdict.CONSISTENT
    assert report.fitted_slope == pytest.approx(0.5, abs=0.05)
    assert report.failures == 0


def test_weight_scan_witness_and_range():
    grid = SectorGrid(d=3, ell=0, r_max=20.0, n=128)
    witness = ScalingService.scan_weight(grid, 1.0, 0.5, WEIGHT_SAMPLES)
    assert witness.verdict == Verdict.INCONCLUSIVE
    assert any("witness" in note for note in witness.notes)
    with pytest.raises(PreconditionError):
        ScalingService.scan_weight(grid, 1.5, 2.0, WEIGHT_SAMPLES)


def test_free_resolvent_scan_is_consistent(free_profile, small_grid):
    scan = ScalingService.build_resolvent_scan(
        3, 0, ScanTarget.DERIVATIVE, rho1=0.5, r_samples=[0.01, 0.02, 0.04, 0.08], drop_largest=0,
    )
    report = ScalingService.scan_resolvent(free_profile, small_grid, scan, experiment_id="abc")
    assert report.experiment_id == "abc"
    assert report.verdict == Verdict.CONSISTENT
    assert len(report.norms) == 4
    assert report.delta_left == report.delta_right == pytest.approx(1.6)


def test_scan_near_real_axis_needs_absorbing_potential(free_profile, small_grid):
    scan = ScalingService.build_resolvent_scan(3, 0, ScanTarget.DERIVATIVE, rho1=0.5, angle=0.01)
    with pytest.raises(PreconditionError):
        ScalingService.scan_resolvent(free_profile, small_grid, scan)


def test_high_frequency_norms_decrease(free_profile, small_grid):
    report = ScalingService.high_frequency_check(
        free_profile, small_grid, [1.0, 2.0, 4.0, 8.0], power=PowerSettings(tol=1e-3, max_iter=2000),
    )
    norms = report.norms
    assert len(norms) == 4
    assert all(b < a for a, b in zip(norms, norms[1:]))
    assert report.verdict != Verdict.VIOLATION


def make_report(norms):
    samples = [ScalingSample(r=r, norm=v) for r, v in zip([0.01, 0.02, 0.2], norms)]
    return ScalingReport(experiment_id="", kind="k", angle=math.pi / 2, samples=samples,
                         predicted_exponent=0.0, tolerance=0.15, verdict=Verdict.CONSISTENT)


def test_monotone_in_n():
    reports = {0: make_report([1.0, 1.0, 1.0]), 1: make_report([2.0, 0.5, 0.1])}
    notes = ScalingService.monotone_in_n(reports)
    # r = 0.2 lies outside the radius
    assert len(notes) == 1 and "r=0.02" in notes[0]


BOUNDED_RAY = [1e-3, 1e-2, 1e-1]


def test_exponent_zero_scan_must_stay_bounded():
    # slope 0.5 clears the bound, but the norm grows tenfold along the ray
    samples = [ScalingSample(r=r, norm=v) for r, v in zip(BOUNDED_RAY, [1.0, math.sqrt(10.0), 10.0])]
    report = summarize_scan("", "derivative-n0", math.pi / 2, samples, 0.0, 0.15, 0.25, 0, [],
                            bounded_factor=3.0)
    assert report.fitted_slope == pytest.approx(0.5)
    assert report.verdict == Verdict.VIOLATION
    assert any("factor 3" in note for note in report.notes)


def test_unbounded_exponent_zero_scan_with_failures_is_inconclusive():
    samples = [ScalingSample(r=r, norm=v) for r, v in zip(BOUNDED_RAY, [1.0, math.sqrt(10.0), 10.0])]
    samples.append(ScalingSample(r=0.2, error="solve failed"))
    report = summarize_scan("", "derivative-n0", math.pi / 2, samples, 0.0, 0.15, 0.25, 0, [],
                            bounded_factor=3.0)
    assert report.verdict == Verdict.INCONCLUSIVE
    assert report.failures == 1


def test_bounded_exponent_zero_scan_stays_consistent():
    samples = [ScalingSample(r=r, norm=v) for r, v in zip(BOUNDED_RAY, [1.0, 1.5, 2.5])]
    report = summarize_scan("", "derivative-n0", math.pi / 2, samples, 0.0, 0.15, 0.25, 0, [],
                            bounded_factor=3.0)
    assert report.verdict == Verdict.CONSISTENT
    # the largest-r sample is outside the fit and does not count
    samples.append(ScalingSample(r=0.3, norm=40.0))
    report = summarize_scan("", "derivative-n0", math.pi / 2, samples, 0.0, 0.15, 0.25, 1, [],
                            bounded_factor=3.0)
    assert report.verdict == Verdict.CONSISTENT


def test_scan_report_records_default_weight(free_profile, small_grid):
    scan = ScalingService.build_resolvent_scan(
        3, 1, ScanTarget.FREE_DERIVATIVE, rho1=0.5, r_samples=[0.02, 0.04, 0.08], drop_largest=0,
    )
    report = ScalingService.scan_resolvent(free_profile, small_grid, scan)
    assert report.delta_left == pytest.approx(default_delta(1))
    assert report.delta_right == pytest.approx(2.6)
