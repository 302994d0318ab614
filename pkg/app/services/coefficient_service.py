"""
Coefficient service
Builds and validates radial coefficient profiles and estimates symbol seminorms
"""
import logging
from typing import Callable, Optional, Union

import numpy as np

from app.core.exceptions import ConvergenceError, ProfileError, SeminormDivergenceError
from app.models.profile import (
    BracketPower,
    Bump,
    CoefficientName,
    CoefficientProfile,
    ConstantFunction,
    RadialFunction,
    SumFunction,
)
from app.schemas.profile import ProfileConfig
from app.schemas.report import HypothesisConstants, SeminormEstimate

logger = logging.getLogger(__name__)

AMPLITUDE_CAP = 0.5
SEMINORM_LIMIT_EXPONENT = 20   # sup taken over r <= 2^20
INNER_BAND_EXPONENT = 10       # divergence compares (2^10, 2^20] with [0, 2^10]
DIVERGENCE_FACTOR = 1.5
REFINEMENT_TOL = 0.05

# Central stencils on (r-2s, r-s, r, r+s, r+2s) with s = 1e-2 <r>
_STENCILS = {
    1: np.array([0.0, -0.5, 0.0, 0.5, 0.0]),
    2: np.array([0.0, 1.0, -2.0, 1.0, 0.0]),
    3: np.array([-0.5, 1.0, 0.0, -1.0, 0.5]),
}

RadialLike = Union[RadialFunction, Callable[[np.ndarray], np.ndarray]]


def sample_radii(points_per_octave: int = 16) -> np.ndarray:
    """Linear grid on [0, 1] joined to a dyadic grid on [1, 2^20]"""
    near = np.linspace(0.0, 1.0, 8 * points_per_octave + 1)
    far = 2.0 ** (np.arange(0, SEMINORM_LIMIT_EXPONENT * points_per_octave + 1) / points_per_octave)
    return np.unique(np.concatenate([near, far]))


def radial_derivative(fn: RadialLike, r: np.ndarray, order: int) -> np.ndarray:
    """Closed-form derivative when available, central finite differences otherwise"""
    r = np.asarray(r, dtype=float)
    if isinstance(fn, RadialFunction) and order <= fn.max_order:
        return fn.derivative(r, order)
    if order == 0:
        return np.asarray(fn(r), dtype=float)
    if order not in _STENCILS:
        raise ValueError(f"no finite-difference stencil for order {order}")
    step = 1e-2 * np.sqrt(1.0 + r * r)
    total = np.zeros_like(r)
    for shift, coeff in zip(range(-2, 3), _STENCILS[order]):
        if coeff != 0.0:
            total = total + coeff * np.asarray(fn(r + shift * step), dtype=float)
    return total / step ** order


class CoefficientService:
    """Service for coefficient profiles and their symbol-class hypotheses"""

    @staticmethod
    def build_profile(config: ProfileConfig) -> CoefficientProfile:
        """
        Build the built-in coefficient family with optional bumps

        Args:
            config: Validated profile section of an experiment config

        Returns:
            CoefficientProfile: Immutable profile with closed-form evaluators

        Raises:
            ProfileError: If a hypothesis (dimension, decay exponent, ellipticity,
                positivity of w, non-negativity of a) is violated
        """
        if config.d < 3:
            raise ProfileError("dimension must be at least 3", context={"d": config.d})
        if not 0 < config.rho0 <= 1:
            raise ProfileError("rho0 must lie in (0, 1]", context={"rho0": config.rho0})
        if not 0 < config.rho1 < config.rho0:
            raise ProfileError("rho1 must lie in (0, rho0)", context={"rho1": config.rho1})
        if abs(config.g_amp) > AMPLITUDE_CAP or abs(config.w_amp) > AMPLITUDE_CAP:
            raise ProfileError(
                f"metric/density amplitudes are capped at {AMPLITUDE_CAP} (non-trapping by construction)",
                context={"g_amp": config.g_amp, "w_amp": config.w_amp},
            )
        if config.a_amp < 0:
            raise ProfileError("damping amplitude must be non-negative", context={"a_amp": config.a_amp})

        bumps = tuple(
            Bump(CoefficientName(b.target), b.center, b.width, b.height) for b in config.bumps
        )

        def assemble(base: RadialFunction, target: CoefficientName) -> RadialFunction:
            extra = tuple(b.function() for b in bumps if b.target == target)
            return SumFunction((base,) + extra) if extra else base

        profile = CoefficientProfile(
            d=config.d,
            rho0=config.rho0,
            g_amp=config.g_amp,
            w_amp=config.w_amp,
            a_amp=config.a_amp,
            g_pert=assemble(BracketPower(config.g_amp, config.rho0) if config.g_amp else ConstantFunction(0.0),
                            CoefficientName.G),
            w_pert=assemble(BracketPower(config.w_amp, config.rho0) if config.w_amp else ConstantFunction(0.0),
                            CoefficientName.W),
            a_fn=assemble(BracketPower(config.a_amp, 1.0 + config.rho0) if config.a_amp else ConstantFunction(0.0),
                          CoefficientName.A),
            bumps=bumps,
        )

        # Check ellipticity and signs on the sample grid
        r = sample_radii()
        g, w, a = profile.g(r), profile.w(r), profile.a(r)
        if np.min(g) <= 0:
            raise ProfileError("g is not uniformly elliptic", context={"min_g": float(np.min(g))})
        if np.min(w) <= 0:
            raise ProfileError("w must be positive", context={"min_w": float(np.min(w))})
        if np.min(a) < 0:
            raise ProfileError("damping a must be non-negative", context={"min_a": float(np.min(a))})

        logger.debug("built %r", profile)
        return profile

    @staticmethod
    def hypothesis_constants(profile: CoefficientProfile) -> HypothesisConstants:
        """
        Read the hypothesis constants off the sample grid

        Only finiteness is certified; the values are what the grid shows.
        """
        r = sample_radii()
        bracket = np.sqrt(1.0 + r * r)
        g, w, a = profile.g(r), profile.w(r), profile.a(r)
        c_g = float(max(np.max(g), 1.0 / np.min(g)))
        c_w = float(max(np.max(w), 1.0 / np.min(w)))
        return HypothesisConstants(
            c_g=c_g,
            c_w=c_w,
            decay_metric=float(np.max((np.abs(g - 1) + np.abs(w - 1)) * bracket ** profile.rho0)),
            decay_damping=float(np.max(np.abs(a) * bracket ** (1 + profile.rho0))),
            a_max=float(np.max(a)),
            w_inv_sqrt_max=float(np.max(w ** -0.5)),
            speed_bound=max(c_g, c_w),
        )

    @staticmethod
    def seminorm(
        fn: RadialLike,
        kappa: float,
        max_order: Optional[int] = None,
        d: int = 3,
        points_per_octave: int = 16,
    ) -> SeminormEstimate:
        """
        Estimate sup_{m <= max_order} sup_r <r>^{kappa+m} |d^m fn / dr^m|

        Args:
            fn: Radial function (closed form) or numpy callable (finite differences)
            kappa: Decay order of the symbol class
            max_order: Derivatives checked; defaults to floor(d/2) + 1
            d: Dimension used for the default max_order
            points_per_octave: Base resolution of the dyadic grid

        Returns:
            SeminormEstimate: Sup estimate with per-order values

        Raises:
            SeminormDivergenceError: If the weighted derivatives keep growing up to 2^20
            ConvergenceError: If doubling the resolution moves the value by 5% or more
        """
        if kappa < 0:
            raise ValueError("kappa must be non-negative")
        if max_order is None:
            max_order = d // 2 + 1

        def sweep(points: int):
            r = sample_radii(points)
            bracket = np.sqrt(1.0 + r * r)
            return r, [bracket ** (kappa + m) * np.abs(radial_derivative(fn, r, m)) for m in range(max_order + 1)]

        r_fine, fine = sweep(2 * points_per_octave)
        inner_mask = r_fine <= 2.0 ** INNER_BAND_EXPONENT
        for order, values in enumerate(fine):
            inner = float(np.max(values[inner_mask]))
            tail = values[~inner_mask]
            outer = float(np.max(tail))
            growing = tail[-1] >= outer * (1 - 1e-9)
            if outer > DIVERGENCE_FACTOR * inner and outer > 1e-14 and growing:
                raise SeminormDivergenceError(
                    f"not in S^-{kappa:g}: derivative of order {order} weighted by <r>^{kappa + order:g} "
                    "keeps growing on the dyadic grid",
                    context={"sup_r<=2^10": inner, "sup_tail": outer},
                )

        _, coarse = sweep(points_per_octave)
        per_order = [float(np.max(values)) for values in fine]
        value = max(per_order)
        coarse_value = max(float(np.max(values)) for values in coarse)
        if abs(value - coarse_value) > REFINEMENT_TOL * max(value, 1e-300):
            raise ConvergenceError(
                "seminorm estimate not stable under grid refinement",
                context={"coarse": coarse_value, "fine": value},
            )

        stacked = np.max(np.vstack(fine), axis=0)
        argmax_r = float(r_fine[int(np.argmax(stacked))])
        return SeminormEstimate(
            kappa=kappa, max_order=max_order, value=value, argmax_r=argmax_r, per_order=per_order
        )
