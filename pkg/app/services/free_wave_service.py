"""
Free wave service
Spectral free-wave propagators per sector, Huygens residual and local decay
"""
import logging
from typing import List, Sequence

import numpy as np

from app.core.exceptions import PreconditionError, SupportError
from app.core.fitting import bound_verdict, fit_loglog
from app.models.sector import SectorGrid
from app.models.wave import WaveState
from app.schemas.report import DecayReport, SeriesFit
from app.services.operator_service import FreeSpectrum, OperatorService

logger = logging.getLogger(__name__)

SUPPORT_THRESHOLD = 1e-12     # relative amplitude treated as outside the support
DECAY_TOLERANCE = 0.3


class FreePropagator:
    """
    cos(t sqrt(-Delta)) and sin(t sqrt(-Delta)) / sqrt(-Delta) by spectral multipliers

    Exact in time; evaluations are re-entrant.
    """

    def __init__(self, spectrum: FreeSpectrum):
        self.spectrum = spectrum
        self.grid = spectrum.grid
        self.roots = np.sqrt(spectrum.eigenvalues)

    def cos(self, t: float, u: np.ndarray) -> np.ndarray:
        return self.spectrum.apply_multiplier(np.cos(t * self.roots), u)

    def sin_over_root(self, t: float, u: np.ndarray) -> np.ndarray:
        # sin(t s) / s = t sinc(t s / pi), equal to t at s = 0
        return self.spectrum.apply_multiplier(t * np.sinc(t * self.roots / np.pi), u)

    def root_sin(self, t: float, u: np.ndarray) -> np.ndarray:
        """sqrt(-Delta) sin(t sqrt(-Delta)) u"""
        return self.spectrum.apply_multiplier(self.roots * np.sin(t * self.roots), u)

    def solve(self, f0: np.ndarray, g0: np.ndarray, t: float) -> WaveState:
        """u_0(t) and its time derivative"""
        u = self.cos(t, f0) + self.sin_over_root(t, g0)
        v = -self.root_sin(t, f0) + self.cos(t, g0)
        return WaveState(t, u, v, self.grid)

    def energy(self, state: WaveState) -> float:
        """||grad u||^2 + ||du/dt||^2 = sum lambda_k |c_k|^2 + ||v||^2"""
        coeffs = self.spectrum.coefficients(state.u)
        return float(np.sum(self.spectrum.eigenvalues * np.abs(coeffs) ** 2) + self.grid.norm(state.v) ** 2)


class FreeWaveService:
    """Service for the unperturbed wave equation"""

    @staticmethod
    def propagator(grid: SectorGrid) -> FreePropagator:
        return FreePropagator(OperatorService.free_spectrum(grid))

    @staticmethod
    def support_radius(grid: SectorGrid, vectors: Sequence[np.ndarray]) -> float:
        """Largest node where any vector exceeds 1e-12 of its peak amplitude"""
        radius = 0.0
        for u in vectors:
            magnitude = np.abs(np.asarray(u))
            peak = magnitude.max() if magnitude.size else 0.0
            if peak == 0.0:
                continue
            inside = np.nonzero(magnitude > SUPPORT_THRESHOLD * peak)[0]
            radius = max(radius, float(grid.nodes[inside[-1]]))
        return radius

    @staticmethod
    def free_solution(grid: SectorGrid, f0: np.ndarray, g0: np.ndarray, t: float) -> WaveState:
        """
        Free wave u_0(t) = cos(t sqrt(-Delta)) f0 + sin(t sqrt(-Delta))/sqrt(-Delta) g0

        Args:
            grid: Sector grid
            f0: Initial position
            g0: Initial velocity
            t: Time

        Returns:
            WaveState: u_0(t) with v = du_0/dt

        Raises:
            SupportError: If the data would reach r_max by time t
        """
        support = FreeWaveService.support_radius(grid, [f0, g0])
        if support + abs(t) >= grid.r_max:
            raise SupportError(
                "free wave reaches the truncation boundary",
                context={"support": support, "t": t, "r_max": grid.r_max},
            )
        return FreeWaveService.propagator(grid).solve(f0, g0, t)

    @staticmethod
    def energy(grid: SectorGrid, state: WaveState) -> float:
        return FreeWaveService.propagator(grid).energy(state)

    @staticmethod
    def huygens_residual(grid: SectorGrid, f0: np.ndarray, g0: np.ndarray, t: float, radius: float) -> float:
        """
        ||u_0(t)||_{L^2(B(R))} / ||(f0, g0)|| for data supported in B(R)

        Expected to vanish (up to discretization) for t >= 2R in odd dimension.

        Raises:
            PreconditionError: If d is even
            SupportError: If the data leave B(R) or reach r_max by time t
        """
        if grid.d % 2 == 0:
            raise PreconditionError("strong Huygens principle needs odd d; use local_decay", context={"d": grid.d})
        support = FreeWaveService.support_radius(grid, [f0, g0])
        if support > radius + grid.h:
            raise SupportError("data not supported in B(R)", context={"support": support, "R": radius})
        if t < 2 * radius:
            logger.debug("Huygens residual requested inside the light cone (t=%g < 2R=%g)", t, 2 * radius)
        state = FreeWaveService.free_solution(grid, f0, g0, t)
        data = np.sqrt(grid.norm(f0) ** 2 + grid.norm(g0) ** 2)
        return state.local_norm(radius) / data

    @staticmethod
    def local_decay(
        grid: SectorGrid,
        f0: np.ndarray,
        g0: np.ndarray,
        radius: float,
        times: Sequence[float],
        experiment_id: str = "",
    ) -> DecayReport:
        """
        B(R) norms of cos(t sqrt(-Delta)) f0 and sin(t sqrt(-Delta))/sqrt(-Delta) g0

        Fitted slopes are compared with t^{-d} and t^{1-d}.
        """
        support = FreeWaveService.support_radius(grid, [f0, g0])
        if support + max(times) >= grid.r_max:
            raise SupportError("decay horizon reaches r_max", context={"support": support, "t_max": max(times)})
        propagator = FreeWaveService.propagator(grid)
        cos_series: List[float] = []
        sin_series: List[float] = []
        for t in times:
            cos_series.append(grid.ball_norm(propagator.cos(t, f0), radius))
            sin_series.append(grid.ball_norm(propagator.sin_over_root(t, g0), radius))

        fits = []
        t_lo, t_hi = float(min(times)), float(max(times))
        for name, series, predicted in (("cos_local", cos_series, -grid.d), ("sin_local", sin_series, 1 - grid.d)):
            fit = fit_loglog(times, series)
            fits.append(SeriesFit(
                name=name,
                slope=fit.slope if fit is not None and not fit.vanishing else None,
                predicted_exponent=float(predicted),
                t_lo=t_lo,
                t_hi=t_hi,
                verdict=bound_verdict(fit, predicted, DECAY_TOLERANCE, 0.5, decay=True),
            ))
            logger.info("free %s decay slope %s (bound %d)", name, fits[-1].slope, predicted)
        return DecayReport(
            experiment_id=experiment_id,
            label="free",
            times=[float(t) for t in times],
            series={"cos_local": cos_series, "sin_local": sin_series},
            fits=fits,
            delta=0.0,
        )
