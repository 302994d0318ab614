"""
Scaling service
Frequency-ray scans of weighted resolvent norms, Hardy-type weights and the
theta_sigma factors, with log-log slope verdicts
"""
import cmath
import logging
import math
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from app.core.exceptions import LabError, PreconditionError
from app.core.fitting import bound_verdict, fit_loglog, is_sharp
from app.core.linear_map import LinearMap
from app.core.workers import parallel_map
from app.models.profile import CoefficientProfile
from app.models.resolvent import FactorKind, ResolventProduct
from app.models.sector import SectorGrid
from app.schemas.report import ScalingReport, ScalingSample, Verdict
from app.schemas.scan import PowerSettings, ScanSpec, ScanTarget
from app.services.calculus_service import ProductCalculus
from app.services.resolvent_service import ResolventEngine, ResolventService

logger = logging.getLogger(__name__)

NEAR_REAL_FLOOR = 0.05          # Im z >= 0.05 |z| without absorbing potential
FAILURE_FRACTION = 0.2
ARGMAX_RADIUS = 0.05
MONOTONE_RADIUS = 0.1
WEIGHT_TOLERANCE = 0.1
SHARPNESS_WINDOW = 0.2
BOUNDED_FACTOR = 3.0          # exponent-0 scans: max/min norm across the fitted ray


def predicted_exponent(d: int, n: int, rho1: float = 0.0, difference: bool = False) -> float:
    """min(d + rho1 - n - 2, 0) for R^(n) - R_0^(n), min(d - n - 2, 0) for R^(n)"""
    if difference:
        return min(d + rho1 - n - 2, 0.0)
    return float(min(d - n - 2, 0))


def default_delta(n: int) -> float:
    """Weight exponent above the n + 3/2 threshold"""
    return n + 1.6


def theta_window(sigma: int, d: int, rho: float) -> Tuple[float, float]:
    """Open interval of Sobolev indices s for which theta_sigma: H^s -> H^{s-sigma-rho} is estimated"""
    if sigma == 0:
        return -d / 2 + rho, d / 2
    if sigma == 1:
        return -d / 2 + 1 + rho, d / 2
    if sigma == 2:
        return -d / 2 + 1 + rho, d / 2 + 1
    raise PreconditionError("sigma must be 0, 1 or 2", context={"sigma": sigma})


def ray_samples(r_min: float = 1e-3, r_max: float = 0.3, count: int = 12) -> List[float]:
    """Geometric frequency samples"""
    return [float(r) for r in np.geomspace(r_min, r_max, count)]


def summarize_scan(
    experiment_id: str,
    kind: str,
    angle: float,
    samples: List[ScalingSample],
    predicted: float,
    tolerance: float,
    residual_threshold: float,
    drop_largest: int,
    notes: List[str],
    decay: bool = False,
    bounded_factor: Optional[float] = None,
    delta: Optional[Tuple[float, float]] = None,
) -> ScalingReport:
    """
    Fit the samples of a scan and apply the verdict rule

    With ``bounded_factor`` set, an exponent-0 scan whose fitted norms vary by
    more than that factor is a VIOLATION (INCONCLUSIVE when samples failed).
    """
    failures = sum(1 for s in samples if s.error is not None)
    good = [s for s in samples if s.norm is not None]
    fit = fit_loglog([s.r for s in good], [s.norm for s in good], drop_largest=drop_largest)
    verdict = bound_verdict(fit, predicted, tolerance, residual_threshold, decay=decay)
    if bounded_factor and predicted == 0:
        fitted = sorted(good, key=lambda s: s.r)
        if drop_largest and len(fitted) > drop_largest + 1:
            fitted = fitted[:-drop_largest]
        norms = [s.norm for s in fitted if s.norm > 0]
        if norms and max(norms) > bounded_factor * min(norms):
            notes.append(f"exponent-0 case varies by more than a factor {bounded_factor:g} across the ray")
            verdict = Verdict.INCONCLUSIVE if failures else Verdict.VIOLATION
    if failures > FAILURE_FRACTION * len(samples):
        notes.append(f"{failures} of {len(samples)} samples failed")
        verdict = Verdict.INCONCLUSIVE
    sharp = is_sharp(fit, predicted, SHARPNESS_WINDOW)
    if sharp:
        notes.append("slope matches the predicted exponent within 0.2 (informational)")
    finite = fit is not None and not fit.vanishing
    return ScalingReport(
        experiment_id=experiment_id,
        kind=kind,
        angle=angle,
        samples=samples,
        fitted_slope=fit.slope if finite else None,
        intercept=fit.intercept if finite else None,
        residual=fit.residual if finite else None,
        predicted_exponent=predicted,
        tolerance=tolerance,
        verdict=verdict,
        sharp=sharp,
        failures=failures,
        notes=notes,
        delta_left=delta[0] if delta else None,
        delta_right=delta[1] if delta else None,
    )


def _sample(r: float, measure) -> ScalingSample:
    try:
        norm, ell = measure(r)
        return ScalingSample(r=r, norm=norm, ell_argmax=ell)
    except LabError as exc:
        logger.warning("sample r=%.4g failed: %s", r, exc)
        return ScalingSample(r=r, error=str(exc))


class ScalingService:
    """Service for frequency-scaling experiments"""

    @staticmethod
    def products_for(target: ScanTarget, n: int) -> List[ResolventProduct]:
        if target == ScanTarget.DERIVATIVE:
            return ProductCalculus.derivative_terms(n)
        if target == ScanTarget.FREE_DERIVATIVE:
            return ProductCalculus.derivative_terms(n, free=True)
        return ProductCalculus.difference_terms(n)

    @staticmethod
    def build_resolvent_scan(
        d: int,
        n: int,
        target: ScanTarget,
        rho1: float,
        angle: float = math.pi / 2,
        r_samples: Optional[Sequence[float]] = None,
        delta: Optional[float] = None,
        **options,
    ) -> ScanSpec:
        """ScanSpec with the predicted exponent and default weight for (d, n)"""
        delta = default_delta(n) if delta is None else delta
        return ScanSpec(
            target=target,
            n=n,
            angle=angle,
            r_samples=list(r_samples) if r_samples is not None else ray_samples(),
            delta_left=delta,
            delta_right=delta,
            predicted_exponent=predicted_exponent(d, n, rho1, difference=target == ScanTarget.DIFFERENCE),
            **options,
        )

    @staticmethod
    def scan_resolvent(
        profile: CoefficientProfile,
        grid: SectorGrid,
        scan: ScanSpec,
        experiment_id: str = "",
        jobs: int = 1,
    ) -> ScalingReport:
        """
        Weighted norms along a ray and their fitted slope

        Args:
            profile: Coefficient profile
            grid: Sector grid (sectors 0..scan.ell_max are scanned)
            scan: Scan specification
            experiment_id: Id copied into the report
            jobs: Worker count for the independent r samples

        Returns:
            ScalingReport: Samples, fit and verdict (slope >= predicted - tolerance)

        Raises:
            PreconditionError: If the ray is too close to the real axis without absorbing potential
        """
        if math.sin(scan.angle) < NEAR_REAL_FLOOR and not scan.cap_strength:
            raise PreconditionError(
                "ray too close to the real axis; enable the absorbing potential",
                context={"angle": scan.angle},
            )
        notes: List[str] = []
        if scan.cap_strength:
            logger.warning("absorbing potential enabled (strength %g): adjoint law no longer exact", scan.cap_strength)
            notes.append(f"absorbing potential strength {scan.cap_strength:g} (not part of the continuum problem)")

        products = ScalingService.products_for(scan.target, scan.n)
        power = scan.power

        def measure(r: float):
            z = cmath.rect(r, scan.angle)
            sample = ResolventService.weighted_norm(
                profile, grid, products, z,
                delta_left=scan.delta_left,
                delta_right=scan.delta_right,
                ell_max=scan.ell_max,
                s_left=scan.s_left,
                s_right=scan.s_right,
                cap_strength=scan.cap_strength,
                ball_radius=scan.ball_radius,
                seed=power.seed,
                tol=power.tol,
                max_iter=power.max_iter,
            )
            return sample.norm, sample.ell_argmax

        samples = parallel_map(lambda r: _sample(r, measure), scan.r_samples, jobs)
        off_axis = sorted({s.ell_argmax for s in samples if s.ell_argmax and s.r < ARGMAX_RADIUS})
        if off_axis:
            logger.warning("%s: sector argmax %s below r=%.2g", scan.label, off_axis, ARGMAX_RADIUS)
            notes.append(f"argmax sector {off_axis} below r={ARGMAX_RADIUS:g}")
        report = summarize_scan(
            experiment_id, scan.label, scan.angle, samples, scan.predicted_exponent,
            scan.tolerance, scan.residual_threshold, scan.drop_largest, notes,
            bounded_factor=BOUNDED_FACTOR, delta=(scan.delta_left, scan.delta_right),
        )
        logger.info("%s: slope %s vs predicted %.3g -> %s",
                    scan.label, report.fitted_slope, scan.predicted_exponent, report.verdict.value)
        return report

    @staticmethod
    def scan_weight(
        grid: SectorGrid,
        s: float,
        delta: float,
        r_samples: Sequence[float],
        experiment_id: str = "",
        power: Optional[PowerSettings] = None,
        jobs: int = 1,
    ) -> ScalingReport:
        """
        ||<x>^{-delta}||_{L(H_r^s, L^2)} along r; bound C r^s for 0 <= s < d/2, delta > s

        A weight with delta <= s is run as a witness: the report is INCONCLUSIVE.

        Raises:
            PreconditionError: If s is outside [0, d/2)
        """
        if not 0 <= s < grid.d / 2:
            raise PreconditionError("weight scan needs 0 <= s < d/2", context={"s": s, "d": grid.d})
        power = power or PowerSettings()
        identity = LinearMap.identity(grid.weights)

        def measure(r: float):
            result = ResolventService.sandwiched_norm(
                grid, identity, r, delta_left=delta, s_right=s,
                seed=power.seed, tol=power.tol, max_iter=power.max_iter,
            )
            return result.norm, grid.ell

        samples = parallel_map(lambda r: _sample(r, measure), r_samples, jobs)
        notes: List[str] = []
        report = summarize_scan(experiment_id, f"weight-s{s:g}-delta{delta:g}", math.pi / 2, samples, s,
                         WEIGHT_TOLERANCE, 0.25, 0, notes, delta=(delta, 0.0))
        if report.fitted_slope is not None and report.fitted_slope > s + 0.3:
            report.notes.append("slope above s + 0.3 (informational)")
        if delta <= s:
            report.notes.append("delta <= s: outside the estimate's hypotheses (witness run)")
            report.verdict = Verdict.INCONCLUSIVE
        return report

    @staticmethod
    def scan_theta(
        profile: CoefficientProfile,
        grid: SectorGrid,
        sigma: int,
        s: float,
        rho: float,
        r_samples: Sequence[float],
        angle: float = math.pi / 2,
        experiment_id: str = "",
        power: Optional[PowerSettings] = None,
        jobs: int = 1,
    ) -> ScalingReport:
        """
        ||theta_sigma(z)||_{L(H_z^s, H_z^{s-sigma-rho})} along a ray; bound C |z|^{sigma+rho}

        Raises:
            PreconditionError: If rho >= rho0 or s is outside the admissible window
        """
        if not 0 <= rho < profile.rho0:
            raise PreconditionError("theta scan needs 0 <= rho < rho0", context={"rho": rho, "rho0": profile.rho0})
        lo, hi = theta_window(sigma, grid.d, rho)
        if not lo < s < hi:
            raise PreconditionError(
                f"s must lie in ({lo:g}, {hi:g}) for sigma={sigma}", context={"s": s}
            )
        power = power or PowerSettings()
        kind = FactorKind.theta(sigma)

        def measure(r: float):
            z = cmath.rect(r, angle)
            factor = ResolventService.assemble_factor(kind, profile, grid, z)
            result = ResolventService.sandwiched_norm(
                grid, factor.as_map(), r, s_left=s - sigma - rho, s_right=s,
                seed=power.seed, tol=power.tol, max_iter=power.max_iter,
            )
            return result.norm, grid.ell

        samples = parallel_map(lambda r: _sample(r, measure), r_samples, jobs)
        return summarize_scan(experiment_id, f"theta{sigma}-s{s:g}-rho{rho:g}", angle, samples, sigma + rho,
                       0.15, 0.25, 0, [])

    @staticmethod
    def high_frequency_check(
        profile: CoefficientProfile,
        grid: SectorGrid,
        tau_values: Sequence[float],
        experiment_id: str = "",
        power: Optional[PowerSettings] = None,
    ) -> ScalingReport:
        """
        ||R(tau + i)||_{L(L^2)} for |z| >= 1; bound C / |z| (informational)

        Samples are recorded against |z|; the verdict uses the decay rule.
        """
        power = power or PowerSettings()
        products = ProductCalculus.derivative_terms(0)
        samples = []
        for tau in tau_values:
            z = complex(tau, 1.0)
            try:
                engine = ResolventEngine(profile, grid, z)
                result = ResolventService.sandwiched_norm(
                    grid, engine.as_map(products), 1.0, seed=power.seed, tol=power.tol, max_iter=power.max_iter
                )
                samples.append(ScalingSample(r=abs(z), norm=result.norm, ell_argmax=grid.ell))
            except LabError as exc:
                samples.append(ScalingSample(r=abs(z), error=str(exc)))
        return summarize_scan(experiment_id, "high-frequency", 0.0, samples, -1.0, 0.15, 0.25, 0,
                       ["informational: resolvent norm along Im z = 1"], decay=True)

    @staticmethod
    def monotone_in_n(reports: Dict[int, ScalingReport], radius: float = MONOTONE_RADIUS) -> List[str]:
        """Notes for every r < radius where the norm of R^(n) drops as n grows"""
        notes = []
        orders = sorted(reports)
        for low, high in zip(orders, orders[1:]):
            lower = {s.r: s.norm for s in reports[low].samples if s.norm is not None}
            for sample in reports[high].samples:
                if sample.norm is None or sample.r >= radius or sample.r not in lower:
                    continue
                if sample.norm < lower[sample.r] * (1 - 1e-3):
                    notes.append(f"norm at r={sample.r:.4g} decreases from n={low} to n={high}")
        return notes
