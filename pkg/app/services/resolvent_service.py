"""
Resolvent service
Assembles P(z), P_0(z) and the inserted factors, solves them with certified banded LU,
evaluates resolvent products matrix-free and measures their weighted norms
"""
import cmath
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from app.core.banded import BandedLU
from app.core.exceptions import PreconditionError, SolverError
from app.core.linear_map import LinearMap, power_norm
from app.models.profile import CoefficientProfile
from app.models.resolvent import FactorKind, ResolventProduct, SlotKind
from app.models.sector import SectorGrid, SectorOperator, SymmetryTag
from app.services.calculus_service import ProductCalculus
from app.services.operator_service import OperatorService

logger = logging.getLogger(__name__)

CAP_START = 0.85              # absorbing layer occupies the outer 15% of the grid
RESIDUAL_TOL = 1e-10
RESIDUAL_HARD_FACTOR = 1e4    # residuals above tol * factor after refinement are failures


def _require_upper_half_plane(z: complex):
    if not z.imag > 0:
        raise PreconditionError("spectral parameter must satisfy Im z > 0", context={"z": z})


class SectorResolvent:
    """
    Factored operator with residual-certified solves

    Immutable after construction; solve and solve_adjoint are re-entrant.
    """

    def __init__(self, operator: SectorOperator, label: str = "P", residual_tol: float = RESIDUAL_TOL):
        self.operator = operator
        self.grid = operator.grid
        self.label = label
        self.residual_tol = residual_tol
        self._lu = BandedLU(operator.bands, label)
        self._adjoint = operator.adjoint()

    def _certify(self, apply, refine, rhs: np.ndarray, x: np.ndarray) -> np.ndarray:
        scale = self.grid.norm(rhs)
        if scale == 0.0:
            return np.zeros_like(x)
        residual = rhs - apply(x)
        error = self.grid.norm(residual) / scale
        if error <= self.residual_tol:
            return x
        x = x + refine(residual)
        error = self.grid.norm(rhs - apply(x)) / scale
        if error > self.residual_tol * RESIDUAL_HARD_FACTOR:
            raise SolverError(
                f"residual of {self.label} solve not certified after refinement",
                context={"relative_residual": error, "tol": self.residual_tol},
            )
        if error > self.residual_tol:
            logger.warning("%s solve residual %.3g above %.1g after refinement", self.label, error, self.residual_tol)
        return x

    def _raw_adjoint_solve(self, rhs: np.ndarray) -> np.ndarray:
        # measure adjoint Q^{-1} A^H Q: solve A^H (Q x) = Q rhs
        q = self.grid.weights
        return self._lu.solve(q * rhs, trans=2) / q

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """x with P x = rhs, relative residual <= residual_tol"""
        rhs = np.asarray(rhs)
        x = self._lu.solve(rhs)
        return self._certify(self.operator.matvec, self._lu.solve, rhs, x)

    def solve_adjoint(self, rhs: np.ndarray) -> np.ndarray:
        """x with P^* x = rhs for the measure adjoint"""
        rhs = np.asarray(rhs)
        x = self._raw_adjoint_solve(rhs)
        return self._certify(self._adjoint.matvec, self._raw_adjoint_solve, rhs, x)


class ResolventEngine:
    """
    Matrix-free evaluation of resolvent products on one sector

    Slots "at z" use z_prime (defaults to z), slots "at ir" use i|z|; inserted
    factors are always bound to z. Resolvents and factors are built lazily and
    cached; an engine belongs to one worker.
    """

    def __init__(
        self,
        profile: CoefficientProfile,
        grid: SectorGrid,
        z: complex,
        z_prime: Optional[complex] = None,
        cap_strength: float = 0.0,
        residual_tol: float = RESIDUAL_TOL,
    ):
        z = complex(z)
        _require_upper_half_plane(z)
        self.profile = profile
        self.grid = grid
        self.z = z
        self.z_prime = z if z_prime is None else complex(z_prime)
        _require_upper_half_plane(self.z_prime)
        self.cap_strength = cap_strength
        self.residual_tol = residual_tol
        self._resolvents: Dict[SlotKind, SectorResolvent] = {}
        self._factors: Dict[FactorKind, SectorOperator] = {}
        self._factor_adjoints: Dict[FactorKind, SectorOperator] = {}

    def slot_parameter(self, slot: SlotKind) -> complex:
        return 1j * abs(self.z) if slot.at_ir else self.z_prime

    def resolvent(self, slot: SlotKind) -> SectorResolvent:
        if slot not in self._resolvents:
            zeta = self.slot_parameter(slot)
            if slot.is_free:
                op = ResolventService.assemble_p0(self.grid, zeta, self.cap_strength)
            else:
                op = ResolventService.assemble_pz(self.profile, self.grid, zeta, self.cap_strength)
            self._resolvents[slot] = SectorResolvent(op, f"{slot.value} (z={zeta:.4g})", self.residual_tol)
        return self._resolvents[slot]

    def factor(self, kind: FactorKind) -> SectorOperator:
        if kind not in self._factors:
            self._factors[kind] = ResolventService.assemble_factor(kind, self.profile, self.grid, self.z)
        return self._factors[kind]

    def _factor_adjoint(self, kind: FactorKind) -> SectorOperator:
        if kind not in self._factor_adjoints:
            self._factor_adjoints[kind] = self.factor(kind).adjoint()
        return self._factor_adjoints[kind]

    def _check_bindings(self, product: ResolventProduct):
        mixes = any(s.at_ir for s in product.slots) and not all(s.at_ir for s in product.slots)
        if mixes and not np.isclose(abs(self.z), abs(self.z_prime), rtol=1e-12):
            raise PreconditionError(
                "mixing R(ir) with R(z') needs |z| = |z'|", context={"z": self.z, "z_prime": self.z_prime}
            )

    def apply(self, product: ResolventProduct, rhs: np.ndarray) -> np.ndarray:
        """Right to left: solve, apply factor, solve, ..."""
        self._check_bindings(product)
        x = self.resolvent(product.slots[-1]).solve(rhs)
        for factor, slot in zip(reversed(product.factors), reversed(product.slots[:-1])):
            x = self.resolvent(slot).solve(self.factor(factor).matvec(x))
        return product.multiplicity * x

    def apply_adjoint(self, product: ResolventProduct, rhs: np.ndarray) -> np.ndarray:
        """Adjoint action: the chain reversed with adjoint solves and factors"""
        self._check_bindings(product)
        x = self.resolvent(product.slots[0]).solve_adjoint(rhs)
        for factor, slot in zip(product.factors, product.slots[1:]):
            x = self.resolvent(slot).solve_adjoint(self._factor_adjoint(factor).matvec(x))
        return product.multiplicity * x

    def apply_sum(self, products: Sequence[ResolventProduct], rhs: np.ndarray) -> np.ndarray:
        total = np.zeros(self.grid.n, dtype=complex)
        for product in products:
            total = total + self.apply(product, rhs)
        return total

    def apply_sum_adjoint(self, products: Sequence[ResolventProduct], rhs: np.ndarray) -> np.ndarray:
        total = np.zeros(self.grid.n, dtype=complex)
        for product in products:
            total = total + self.apply_adjoint(product, rhs)
        return total

    def as_map(self, products: Sequence[ResolventProduct]) -> LinearMap:
        products = list(products)
        return LinearMap(
            matvec=lambda x: self.apply_sum(products, x),
            rmatvec=lambda y: self.apply_sum_adjoint(products, y),
            weights=self.grid.weights,
        )


@dataclass
class NormSample:
    """Operator norm maximized over sectors ell = 0..ell_max"""

    norm: float
    ell_argmax: int
    per_ell: List[float] = field(default_factory=list)
    iterations: int = 0


class ResolventService:
    """Service for P(z), its resolvent and weighted norms of resolvent products"""

    @staticmethod
    def cap_potential(grid: SectorGrid, strength: float) -> np.ndarray:
        """V_cap = strength ((r - r0) / (r_max - r0))^2 on r >= r0 = 0.85 r_max"""
        r0 = CAP_START * grid.r_max
        ramp = np.clip((grid.nodes - r0) / (grid.r_max - r0), 0.0, None)
        return strength * ramp ** 2

    @staticmethod
    def assemble_pz(
        profile: CoefficientProfile, grid: SectorGrid, z: complex, cap_strength: float = 0.0
    ) -> SectorOperator:
        """
        P(z) = -Delta_G - i z a w - z^2 w on one sector

        Args:
            profile: Coefficient profile
            grid: Sector grid
            z: Spectral parameter with Im z > 0
            cap_strength: Optional absorbing potential, added as -i V_cap

        Returns:
            SectorOperator: Complex tridiagonal operator

        Raises:
            PreconditionError: If Im z <= 0
        """
        z = complex(z)
        _require_upper_half_plane(z)
        r = grid.nodes
        potential = -1j * z * profile.aw(r) - z * z * profile.w(r)
        if cap_strength:
            potential = potential - 1j * ResolventService.cap_potential(grid, cap_strength)
        laplacian = OperatorService.assemble_laplacian(profile, grid)
        bands = -laplacian.bands.astype(complex)
        bands[2] += potential
        return SectorOperator(grid, bands, SymmetryTag.GENERAL)

    @staticmethod
    def assemble_p0(grid: SectorGrid, z: complex, cap_strength: float = 0.0) -> SectorOperator:
        """P_0(z) = -Delta - z^2, with the same absorbing potential as P(z)"""
        z = complex(z)
        _require_upper_half_plane(z)
        laplacian = OperatorService.assemble_free_laplacian(grid)
        bands = -laplacian.bands.astype(complex)
        bands[2] -= z * z
        if cap_strength:
            bands[2] -= 1j * ResolventService.cap_potential(grid, cap_strength)
        return SectorOperator(grid, bands, SymmetryTag.GENERAL)

    @staticmethod
    def assemble_real_part(profile: CoefficientProfile, grid: SectorGrid, z: complex) -> SectorOperator:
        """P_R(z) = -Delta_G + Im(z) a w - Re(z^2) w, the selfadjoint part of P(z)"""
        z = complex(z)
        r = grid.nodes
        laplacian = OperatorService.assemble_laplacian(profile, grid)
        potential = z.imag * profile.aw(r) - (z * z).real * profile.w(r)
        return -laplacian + SectorOperator.diagonal(grid, potential)

    @staticmethod
    def assemble_factor(kind: FactorKind, profile: CoefficientProfile, grid: SectorGrid, z: complex) -> SectorOperator:
        """
        Realize an inserted factor at z

        gamma_0 = 2w, gamma_1 = iaw + 2zw, gamma_2 = (r + iz)aw + (z^2 + r^2)w with r = |z|;
        free factors 2, 2z, z^2 + r^2; theta_0 = 2(w-1), theta_1 = iaw + 2z(w-1),
        theta_2 = (Delta_G - Delta) + iz aw + z^2 (w-1).
        """
        z = complex(z)
        r_z = abs(z)
        nodes = grid.nodes
        ones = np.ones(grid.n)
        if kind.is_free:
            values = {0: 2.0 * ones, 1: 2 * z * ones, 2: (z * z + r_z ** 2) * ones}[kind.index]
            return SectorOperator.diagonal(grid, np.asarray(values, dtype=complex), SymmetryTag.GENERAL)

        w, aw = profile.w(nodes), profile.aw(nodes)
        if kind == FactorKind.GAMMA0:
            values = 2.0 * w
        elif kind == FactorKind.GAMMA1:
            values = 1j * aw + 2 * z * w
        elif kind == FactorKind.GAMMA2:
            values = (r_z + 1j * z) * aw + (z * z + r_z ** 2) * w
        elif kind == FactorKind.THETA0:
            values = 2.0 * (w - 1.0)
        elif kind == FactorKind.THETA1:
            values = 1j * aw + 2 * z * (w - 1.0)
        else:
            bridge = OperatorService.assemble_laplacian(profile, grid) - OperatorService.assemble_free_laplacian(grid)
            multiplier = SectorOperator.diagonal(grid, 1j * z * aw + z * z * (w - 1.0), SymmetryTag.GENERAL)
            return SectorOperator(grid, (bridge + multiplier).bands, SymmetryTag.GENERAL)
        return SectorOperator.diagonal(grid, np.asarray(values, dtype=complex), SymmetryTag.GENERAL)

    @staticmethod
    def coercivity_ratio(
        profile: CoefficientProfile, grid: SectorGrid, z: complex, vectors: Sequence[np.ndarray]
    ) -> float:
        """
        Lax-Milgram witness min_u Re<e^{-i theta_z} P(z) u, u> / (|z|^2 ||u||^2_{H^1_z})

        theta_z = arg z - pi/2 rotates the three terms of <P(z)u, u> into the closed
        right half plane for z in D_I; |z|^2 ||u||^2_{H^1_z} = <-Delta u, u> + |z|^2 ||u||^2.
        """
        z = complex(z)
        op = ResolventService.assemble_pz(profile, grid, z)
        free = OperatorService.assemble_free_laplacian(grid)
        rotation = cmath.exp(-1j * (cmath.phase(z) - np.pi / 2))
        ratios = []
        for u in vectors:
            numerator = (rotation * grid.inner(op.matvec(u), u)).real
            denominator = (-grid.inner(free.matvec(u), u)).real + abs(z) ** 2 * grid.norm(u) ** 2
            ratios.append(numerator / denominator)
        return float(min(ratios))

    @staticmethod
    def derivative_oracle(
        profile: CoefficientProfile,
        grid: SectorGrid,
        z: complex,
        n: int,
        rhs: np.ndarray,
        step: Optional[float] = None,
        free: bool = False,
    ) -> float:
        """
        Relative gap between the order-n term sum and Richardson-extrapolated
        central differences of the order n-1 term sum

        Args:
            profile: Coefficient profile
            grid: Sector grid
            z: Base point
            n: Derivative order >= 1
            rhs: Fixed right-hand side
            step: Difference step h (default 0.005 |z|)
            free: Check R_0 instead of R

        Returns:
            float: ||S_n(z) - (4 D(h/2) - D(h)) / 3|| / ||S_n(z)||
        """
        if n < 1:
            raise PreconditionError("derivative oracle needs n >= 1", context={"n": n})
        z = complex(z)
        h = 0.005 * abs(z) if step is None else step
        lower = ProductCalculus.derivative_terms(n - 1, free=free)
        target = ProductCalculus.derivative_terms(n, free=free)

        def term_sum(zeta: complex, products) -> np.ndarray:
            return ResolventEngine(profile, grid, zeta).apply_sum(products, rhs)

        def central(step_size: float) -> np.ndarray:
            return (term_sum(z + step_size, lower) - term_sum(z - step_size, lower)) / (2 * step_size)

        extrapolated = (4 * central(h / 2) - central(h)) / 3
        exact = term_sum(z, target)
        return grid.norm(exact - extrapolated) / grid.norm(exact)

    @staticmethod
    def sandwiched_norm(
        grid: SectorGrid,
        core: LinearMap,
        r: float,
        delta_left: float = 0.0,
        delta_right: float = 0.0,
        s_left: float = 0.0,
        s_right: float = 0.0,
        ball_radius: Optional[float] = None,
        seed: int = 20240601,
        tol: float = 1e-4,
        max_iter: int = 500,
    ):
        """
        ||<D_r>^{s_left} W_L T W_R <D_r>^{-s_right}|| on one sector

        W = <r>^{-delta} on each side, or the indicator of B(ball_radius) on both
        sides when ball_radius is given. The result is the norm of T in
        L(H_r^{s_right}, H_r^{s_left}) between the weighted spaces.
        """
        weights = grid.weights
        if ball_radius is not None:
            indicator = (grid.nodes <= ball_radius).astype(float)
            left = right = LinearMap.diagonal(indicator, weights)
        else:
            left = LinearMap.diagonal(OperatorService.weight(grid, delta_left), weights)
            right = LinearMap.diagonal(OperatorService.weight(grid, delta_right), weights)
        if s_left or s_right:
            scale = OperatorService.sobolev_scale(grid, r)
            if s_left:
                left = scale.as_map(s_left) @ left
            if s_right:
                right = right @ scale.as_map(-s_right)
        return power_norm(left @ core @ right, seed=seed, tol=tol, max_iter=max_iter)

    @staticmethod
    def weighted_norm(
        profile: CoefficientProfile,
        grid: SectorGrid,
        products: Sequence[ResolventProduct],
        z: complex,
        delta_left: float = 0.0,
        delta_right: float = 0.0,
        ell_max: int = 0,
        z_prime: Optional[complex] = None,
        s_left: float = 0.0,
        s_right: float = 0.0,
        cap_strength: float = 0.0,
        ball_radius: Optional[float] = None,
        seed: int = 20240601,
        tol: float = 1e-4,
        max_iter: int = 500,
    ) -> NormSample:
        """
        Weighted operator norm of a sum of resolvent products, sup over sectors

        Args:
            profile: Coefficient profile
            grid: Grid (its ell is ignored; sectors 0..ell_max are scanned)
            products: Products whose sum is measured
            z: Factor binding and |z| of the R(ir) slots
            delta_left: Left weight exponent
            delta_right: Right weight exponent
            ell_max: Largest sector
            z_prime: Binding of the R(z) slots (defaults to z)
            s_left: Target Sobolev index (H_z^{s_left})
            s_right: Source Sobolev index (H_z^{s_right})
            cap_strength: Absorbing potential strength (0 disables)
            ball_radius: Use 1_{B(R)} on both sides instead of <r>^{-delta}
            seed: Power-iteration seed
            tol: Power-iteration relative tolerance
            max_iter: Power-iteration cap

        Returns:
            NormSample: max over ell, the argmax and the per-sector values

        Raises:
            ConvergenceError: If the power iteration does not converge
            SolverError: If a factorization or residual certification fails
        """
        if delta_left < 0 or delta_right < 0:
            raise PreconditionError("weights must be non-negative",
                                    context={"delta_left": delta_left, "delta_right": delta_right})
        per_ell: List[float] = []
        iterations = 0
        for ell in range(ell_max + 1):
            sector = grid.with_ell(ell)
            engine = ResolventEngine(profile, sector, z, z_prime, cap_strength)
            result = ResolventService.sandwiched_norm(
                sector, engine.as_map(products), abs(complex(z)),
                delta_left, delta_right, s_left, s_right, ball_radius, seed, tol, max_iter,
            )
            per_ell.append(result.norm)
            iterations += result.iterations
        best = int(np.argmax(per_ell))
        logger.debug("weighted norm at z=%s: %.6g (ell=%d)", complex(z), per_ell[best], best)
        return NormSample(per_ell[best], best, per_ell, iterations)
