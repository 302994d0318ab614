"""
Evolution service
Crank-Nicolson stepping of the damped wave system, modified energy, comparison
with the free profile and the contour-synthesis cross-check
"""
import logging
import math
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from app.core.banded import BandedLU
from app.core.exceptions import AccuracyError, PreconditionError, SupportError
from app.core.fitting import bound_verdict, fit_loglog
from app.models.profile import CoefficientProfile
from app.models.sector import SectorGrid
from app.models.wave import WaveState
from app.schemas.report import CheckResult, DecayReport, SeriesFit, SynthesisReport, Verdict
from app.services.coefficient_service import CoefficientService
from app.services.free_wave_service import FreeWaveService
from app.services.operator_service import OperatorService
from app.services.resolvent_service import ResolventService, SectorResolvent

logger = logging.getLogger(__name__)

STEP_CHANGE_TOL = 0.01
MAX_HALVINGS = 3
ENVELOPE_SLACK = 1.01
DECAY_TOLERANCE = 0.3
SYNTHESIS_TOL = 0.02
TAIL_TOL = 1e-2


class CrankNicolsonStepper:
    """
    Trapezoidal rule for u' = v / w, v' = Delta_G u - a v

    Eliminating u^+ leaves one real banded system per step,
    [diag(1 + alpha a) - alpha^2 Delta_G diag(1/w)] v^+ = rhs, alpha = dt / 2,
    factored once.
    """

    def __init__(self, profile: CoefficientProfile, grid: SectorGrid, dt: float):
        if not dt > 0:
            raise PreconditionError("time step must be positive", context={"dt": dt})
        self.grid = grid
        self.dt = dt
        self.alpha = alpha = dt / 2
        self.laplacian = OperatorService.assemble_laplacian(profile, grid)
        self.inv_w = 1.0 / profile.w(grid.nodes)
        self.a = profile.a(grid.nodes)
        system = self.laplacian.right_scale(self.inv_w) * (-alpha ** 2)
        bands = np.array(system.bands)
        bands[2] += 1.0 + alpha * self.a
        self._lu = BandedLU(bands, label="Crank-Nicolson system")

    def step(self, u: np.ndarray, v: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        alpha = self.alpha
        b1 = u + alpha * self.inv_w * v
        b2 = v + alpha * (self.laplacian.matvec(u) - self.a * v)
        v_next = self._lu.solve(b2 + alpha * self.laplacian.matvec(b1))
        u_next = b1 + alpha * self.inv_w * v_next
        return u_next, v_next


class EvolutionService:
    """Service for the damped wave evolution and its asymptotic profile"""

    @staticmethod
    def speed_bound(profile: CoefficientProfile) -> float:
        """gamma = max(C_G, C_w)"""
        return CoefficientService.hypothesis_constants(profile).speed_bound

    @staticmethod
    def _march(profile: CoefficientProfile, grid: SectorGrid, f, g, times: Sequence[float], dt: float) -> List[WaveState]:
        steppers: Dict[int, CrankNicolsonStepper] = {}
        u = np.asarray(f, dtype=float).copy()
        v = profile.w(grid.nodes) * np.asarray(g, dtype=float)
        t_now = 0.0
        states = []
        for t in times:
            span = t - t_now
            if span > 0:
                steps = max(1, math.ceil(span / dt - 1e-9))
                if steps not in steppers:
                    steppers[steps] = CrankNicolsonStepper(profile, grid, span / steps)
                stepper = steppers[steps]
                for _ in range(steps):
                    u, v = stepper.step(u, v)
                t_now = t
            states.append(WaveState(float(t), u.copy(), v.copy(), grid))
        return states

    @staticmethod
    def evolve(
        profile: CoefficientProfile,
        grid: SectorGrid,
        f: np.ndarray,
        g: np.ndarray,
        t_grid: Sequence[float],
        dt: Optional[float] = None,
        verify_step: bool = True,
    ) -> List[WaveState]:
        """
        Damped wave solution with u(0) = f, du/dt(0) = g at the requested times

        Args:
            profile: Coefficient profile
            grid: Sector grid
            f: Initial position
            g: Initial velocity
            t_grid: Increasing non-negative output times
            dt: Time step (default h/2)
            verify_step: Halve dt until the reported norms move by less than 1%

        Returns:
            List[WaveState]: States with v = w du/dt

        Raises:
            SupportError: If r_max <= R0 + gamma t_max
            AccuracyError: If three halvings do not settle the norms
        """
        times = [float(t) for t in t_grid]
        if any(t < 0 for t in times) or any(b < a for a, b in zip(times, times[1:])):
            raise PreconditionError("output times must be non-negative and increasing")
        support = FreeWaveService.support_radius(grid, [f, g])
        gamma = EvolutionService.speed_bound(profile)
        t_max = times[-1] if times else 0.0
        if grid.r_max <= support + gamma * t_max:
            raise SupportError(
                "the wave can reach r_max before t_max",
                context={"support": support, "gamma": gamma, "t_max": t_max, "r_max": grid.r_max},
            )
        dt = grid.h / 2 if dt is None else dt
        states = EvolutionService._march(profile, grid, f, g, times, dt)
        if not verify_step:
            return states

        def reported(run: List[WaveState]) -> np.ndarray:
            return np.array([grid.norm(s.u) for s in run])

        for halving in range(MAX_HALVINGS):
            dt = dt / 2
            finer = EvolutionService._march(profile, grid, f, g, times, dt)
            coarse_norms, fine_norms = reported(states), reported(finer)
            scale = np.maximum(np.abs(fine_norms), 1e-300)
            change = float(np.max(np.abs(coarse_norms - fine_norms) / scale)) if times else 0.0
            states = finer
            if change < STEP_CHANGE_TOL:
                logger.debug("step accepted at dt=%.4g (change %.2g)", dt, change)
                return states
            logger.info("halving time step to %.4g (norm change %.3g)", dt / 2, change)
        raise AccuracyError("time-step refinement did not settle the norms", context={"dt": dt, "change": change})

    @staticmethod
    def energy_nu(profile: CoefficientProfile, epsilon: float) -> float:
        """nu = 2 eps / ||w^{-1/2}||_inf"""
        return 2 * epsilon / CoefficientService.hypothesis_constants(profile).w_inv_sqrt_max

    @staticmethod
    def modified_energy(profile: CoefficientProfile, grid: SectorGrid, state: WaveState, nu: float) -> float:
        """<G grad u, grad u> + nu^2 ||u||^2 + <w^{-1} v, v>"""
        laplacian = OperatorService.assemble_laplacian(profile, grid)
        gradient = -grid.inner(laplacian.matvec(state.u), state.u).real
        inv_w = 1.0 / profile.w(grid.nodes)
        return float(gradient + nu ** 2 * grid.norm(state.u) ** 2 + grid.inner(inv_w * state.v, state.v).real)

    @staticmethod
    def energy_envelope(
        profile: CoefficientProfile, grid: SectorGrid, states: Sequence[WaveState], epsilon: float
    ) -> float:
        """
        max_t E_nu(t) / (e^{2 eps t} E_nu(0)); at most 1.01 for a quasi-contraction

        Returns:
            float: Largest envelope ratio over the states
        """
        nu = EvolutionService.energy_nu(profile, epsilon)
        energies = [EvolutionService.modified_energy(profile, grid, s, nu) for s in states]
        start = energies[0]
        if start == 0:
            return 0.0
        return max(e / (math.exp(2 * epsilon * (s.t - states[0].t)) * start) for e, s in zip(energies, states))

    @staticmethod
    def free_data(profile: CoefficientProfile, grid: SectorGrid, f: np.ndarray, g: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """(f0, g0) = (w f, a w f + w g)"""
        w = profile.w(grid.nodes)
        aw = profile.aw(grid.nodes)
        return w * f, aw * f + w * g

    @staticmethod
    def profile_comparison(
        profile: CoefficientProfile,
        grid: SectorGrid,
        f: np.ndarray,
        g: np.ndarray,
        delta: float,
        t_grid: Sequence[float],
        rho1: float,
        radius: Optional[float] = None,
        t_lo: Optional[float] = None,
        dt: Optional[float] = None,
        experiment_id: str = "",
    ) -> DecayReport:
        """
        Compare u(t) with the free wave u_0(t) started from (w f, a w f + w g)

        Series: local norm on B(R), weighted norm of u, weighted norm of u - u_0,
        weighted norm of u_0 and their ratio. Slopes are fitted on [t_lo, t_max]
        (default t_lo = 4 diam(support)) and compared with t^{-d-rho1} or
        t^{1-d-rho1} (with the ratio against t^{-rho1} in even d).

        Args:
            profile: Coefficient profile
            grid: Sector grid
            f: Initial position
            g: Initial velocity
            delta: Weight exponent (delta <= d + 5/2 is logged as outside the decay hypotheses)
            t_grid: Output times
            rho1: Improvement exponent
            radius: Ball radius for the local norm (default: support radius)
            t_lo: Start of the fit window
            dt: Time step passed to evolve
            experiment_id: Id copied into the report

        Returns:
            DecayReport: Series, fits and verdicts
        """
        d = grid.d
        notes: List[str] = []
        if delta <= d + 2.5:
            logger.warning("delta=%g does not exceed d + 5/2 = %g", delta, d + 2.5)
            notes.append(f"delta={delta:g} <= d + 5/2 (outside the decay hypotheses)")
        support = FreeWaveService.support_radius(grid, [f, g])
        radius = radius or max(support, grid.h)
        t_lo = 8 * support if t_lo is None else t_lo

        states = EvolutionService.evolve(profile, grid, f, g, t_grid, dt=dt)
        f0, g0 = EvolutionService.free_data(profile, grid, f, g)
        propagator = FreeWaveService.propagator(grid)
        weight = OperatorService.weight(grid, delta)

        series: Dict[str, List[float]] = {k: [] for k in ("norm_local", "norm_weighted", "norm_diff", "norm_free", "ratio")}
        for state in states:
            free = propagator.solve(f0, g0, state.t).u
            diff = grid.norm(weight * (state.u - free))
            free_norm = grid.norm(weight * free)
            series["norm_local"].append(state.local_norm(radius))
            series["norm_weighted"].append(state.weighted_norm(delta))
            series["norm_diff"].append(diff)
            series["norm_free"].append(free_norm)
            series["ratio"].append(diff / free_norm if free_norm > 0 else float("nan"))

        # a t^{1-d} term survives only when the free velocity data is nonzero
        shift = 1 if np.any(np.abs(g0) > 0) else 0
        if d % 2:
            local_exponent = -d - rho1 + (1 if np.any(np.abs(g) > 0) else 0)
        else:
            local_exponent = -d + shift
        targets = [("norm_local", local_exponent), ("norm_diff", -d + shift - rho1)]
        if d % 2 == 0:
            targets.append(("ratio", -rho1))

        times = np.array([s.t for s in states])
        window = times >= t_lo
        fits = []
        for name, predicted in targets:
            values = np.array(series[name])
            fit = fit_loglog(times[window], values[window])
            fits.append(SeriesFit(
                name=name,
                slope=fit.slope if fit is not None and not fit.vanishing else None,
                predicted_exponent=predicted,
                t_lo=float(t_lo),
                t_hi=float(times[-1]),
                verdict=bound_verdict(fit, predicted, DECAY_TOLERANCE, 0.5, decay=True),
            ))

        ratio = np.array(series["ratio"])[window]
        ratio = ratio[np.isfinite(ratio)]
        monotone = bool(ratio.size < 2 or np.all(np.diff(ratio) <= 0))
        if not monotone:
            notes.append("ratio |u - u0| / |u0| increases inside the fit window")
            if d % 2 == 0:
                fits.append(SeriesFit(name="ratio_monotone", predicted_exponent=-rho1, t_lo=float(t_lo),
                                      t_hi=float(times[-1]), verdict=Verdict.VIOLATION,
                                      note="ratio increases"))
        logger.info("profile comparison d=%d: %s", d, [(fit.name, fit.slope) for fit in fits])
        return DecayReport(
            experiment_id=experiment_id,
            label="profile-compare",
            times=times.tolist(),
            series=series,
            fits=fits,
            ratio_monotone=monotone,
            delta=delta,
            notes=notes,
        )

    @staticmethod
    def synthesize(
        profile: CoefficientProfile,
        grid: SectorGrid,
        f: np.ndarray,
        g: np.ndarray,
        mu: float,
        times: Sequence[float],
        tau_max: float = 40.0,
        dtau: Optional[float] = None,
    ) -> Tuple[List[np.ndarray], List[np.ndarray]]:
        """
        u(t) = (2 pi)^{-1} int_{Im z = mu} e^{-itz} R(z) (a w f - i z w f + w g) dz

        The two leading terms of R(z)F_z integrate to f + t g exactly; the remainder
        (i/z) R(z) Delta_G f - z^{-2} R(z) (Delta_G g + i z a w g) is integrated by the
        trapezoid rule on tau in [-tau_max, tau_max] with step mu / 5.

        Returns:
            Tuple: synthesized u(t) on the full tau-range and on |tau| <= tau_max / 2
        """
        if not mu > 0:
            raise PreconditionError("contour height mu must be positive", context={"mu": mu})
        dtau = mu / 5 if dtau is None else dtau
        count = int(round(tau_max / dtau))
        taus = dtau * np.arange(-count, count + 1)
        inner = np.abs(taus) <= tau_max / 2
        quadrature = np.full(taus.size, dtau)
        quadrature[[0, -1]] *= 0.5
        inner_quadrature = np.where(inner, dtau, 0.0)
        edge = np.nonzero(inner)[0][[0, -1]]
        inner_quadrature[edge] *= 0.5

        laplacian = OperatorService.assemble_laplacian(profile, grid)
        lap_f, lap_g = laplacian.matvec(f), laplacian.matvec(g)
        awg = profile.aw(grid.nodes) * g
        times = [float(t) for t in times]
        full = [np.zeros(grid.n, dtype=complex) for _ in times]
        half = [np.zeros(grid.n, dtype=complex) for _ in times]
        for k, tau in enumerate(taus):
            z = complex(tau, mu)
            rhs = (1j / z) * lap_f - (lap_g + 1j * z * awg) / z ** 2
            x = SectorResolvent(ResolventService.assemble_pz(profile, grid, z), "P(tau + i mu)").solve(rhs)
            for i, t in enumerate(times):
                phase = np.exp(-1j * t * tau)
                full[i] += quadrature[k] * phase * x
                if inner[k]:
                    half[i] += inner_quadrature[k] * phase * x
        synthesized, truncated = [], []
        for i, t in enumerate(times):
            base = f + t * g
            factor = math.exp(mu * t) / (2 * math.pi)
            synthesized.append((base + factor * full[i]).real)
            truncated.append((base + factor * half[i]).real)
        return synthesized, truncated

    @staticmethod
    def fourier_synthesis_crosscheck(
        profile: CoefficientProfile,
        grid: SectorGrid,
        f: np.ndarray,
        g: np.ndarray,
        mu: float,
        times: Sequence[float],
        tau_max: float = 40.0,
        dt: Optional[float] = None,
        experiment_id: str = "",
    ) -> SynthesisReport:
        """
        Relative deviation between contour synthesis and time stepping

        Args:
            profile: Coefficient profile
            grid: Sector grid
            f: Initial position
            g: Initial velocity
            mu: Contour height
            times: Comparison times (> 0)
            tau_max: Half-length of the tau-range
            dt: Time step passed to evolve
            experiment_id: Id copied into the report

        Returns:
            SynthesisReport: INCONCLUSIVE when halving the tau-range moves the result by
            more than 1e-2, VIOLATION when the deviation exceeds 2%
        """
        synthesized, truncated = EvolutionService.synthesize(profile, grid, f, g, mu, times, tau_max)
        states = EvolutionService.evolve(profile, grid, f, g, times, dt=dt)
        deviations, tails = [], []
        for state, full, half in zip(states, synthesized, truncated):
            scale = grid.norm(state.u)
            deviations.append(grid.norm(full - state.u) / scale)
            tails.append(grid.norm(full - half) / max(grid.norm(full), 1e-300))
        if max(tails) > TAIL_TOL:
            verdict = Verdict.INCONCLUSIVE
        elif max(deviations) > SYNTHESIS_TOL:
            verdict = Verdict.VIOLATION
        else:
            verdict = Verdict.CONSISTENT
        logger.info("synthesis mu=%g: max deviation %.3g, tail change %.3g -> %s",
                    mu, max(deviations), max(tails), verdict.value)
        return SynthesisReport(
            experiment_id=experiment_id,
            mu=mu,
            times=[float(t) for t in times],
            deviations=deviations,
            tail_change=tails,
            tolerance=SYNTHESIS_TOL,
            verdict=verdict,
        )

    @staticmethod
    def mu_independence(
        profile: CoefficientProfile,
        grid: SectorGrid,
        f: np.ndarray,
        g: np.ndarray,
        mus: Sequence[float],
        times: Sequence[float],
        tau_max: float = 40.0,
    ) -> CheckResult:
        """
        Largest relative gap between syntheses on different contour heights

        The integrand is analytic between the contours, so the gap is held to 2%.
        """
        if len(mus) < 2:
            raise PreconditionError("mu independence needs at least two contour heights", context={"mus": list(mus)})
        runs = [EvolutionService.synthesize(profile, grid, f, g, mu, times, tau_max)[0] for mu in mus]
        gap = 0.0
        for other in runs[1:]:
            for reference, value in zip(runs[0], other):
                gap = max(gap, grid.norm(value - reference) / max(grid.norm(reference), 1e-300))
        verdict = Verdict.CONSISTENT if gap <= SYNTHESIS_TOL else Verdict.VIOLATION
        logger.info("synthesis across mu=%s: max gap %.3g -> %s", list(mus), gap, verdict.value)
        return CheckResult(name="synthesis-mu-independence", value=gap, threshold=SYNTHESIS_TOL, verdict=verdict)
