"""
Identity service
Numerical certificates of the resolvent identities, the product expansions,
the adjoint law and the symbolic derivatives
"""
import logging
from typing import List, Sequence

import numpy as np

from app.models.profile import CoefficientProfile
from app.models.resolvent import FactorKind, FrequencyPoint, ResolventProduct, SlotKind
from app.models.sector import SectorGrid
from app.schemas.report import CheckResult, Verdict
from app.services.calculus_service import ProductCalculus
from app.services.resolvent_service import ResolventEngine, ResolventService, SectorResolvent

logger = logging.getLogger(__name__)

IDENTITY_TOL = 1e-8
ADJOINT_TOL = 1e-12
ORACLE_TOL = 1e-6
THETA_STEP = 1e-3


def _check(name: str, value: float, threshold: float, note: str = "") -> CheckResult:
    verdict = Verdict.CONSISTENT if value <= threshold else Verdict.VIOLATION
    logger.debug("%s: %.3e (threshold %.1e) -> %s", name, value, threshold, verdict.value)
    return CheckResult(name=name, value=float(value), threshold=threshold, verdict=verdict, note=note)


def _relative(grid: SectorGrid, value: np.ndarray, reference: np.ndarray) -> float:
    scale = grid.norm(reference)
    return grid.norm(value - reference) / scale if scale > 0 else grid.norm(value)


class IdentityService:
    """Service for operator-identity certificates on random right-hand sides"""

    @staticmethod
    def random_rhs(grid: SectorGrid, seed: int) -> np.ndarray:
        rng = np.random.default_rng(seed)
        return rng.standard_normal(grid.n) + 1j * rng.standard_normal(grid.n)

    @staticmethod
    def solve_roundtrip(profile: CoefficientProfile, grid: SectorGrid, z: complex, seed: int) -> CheckResult:
        """||P(z) R(z) b - b|| / ||b||"""
        op = ResolventService.assemble_pz(profile, grid, z)
        rhs = IdentityService.random_rhs(grid, seed)
        x = SectorResolvent(op).solve(rhs)
        return _check("P(z)R(z)=I", _relative(grid, op.matvec(x), rhs), IDENTITY_TOL)

    @staticmethod
    def difference_identity(profile: CoefficientProfile, grid: SectorGrid, z: complex, seed: int) -> CheckResult:
        """R(z) - R_0(z) = R(z) theta_2(z) R_0(z)"""
        engine = ResolventEngine(profile, grid, z)
        rhs = IdentityService.random_rhs(grid, seed)
        resolvent = ResolventProduct((SlotKind.PERTURBED_Z,))
        free = ResolventProduct((SlotKind.FREE_Z,))
        difference = engine.apply(resolvent, rhs) - engine.apply(free, rhs)
        bridged = engine.apply_sum(ProductCalculus.difference_terms(0), rhs)
        return _check("R-R0=R.theta.R0", _relative(grid, bridged, difference), IDENTITY_TOL)

    @staticmethod
    def expansion_identities(
        profile: CoefficientProfile, grid: SectorGrid, z: complex, seed: int, max_depth: int = 3, max_k: int = 2
    ) -> List[CheckResult]:
        """
        Sum of expand_ir terms against the original chain, for chains with k <= max_k
        and depths 0..max_depth; depth 0 of R(z) is the resolvent identity itself
        """
        engine = ResolventEngine(profile, grid, z)
        rhs = IdentityService.random_rhs(grid, seed)
        chains = [ResolventProduct((SlotKind.PERTURBED_Z,) * (k + 1), tuple(factors))
                  for k, factors in _gamma_chains(max_k)]
        results = []
        for chain in chains:
            original = engine.apply(chain, rhs)
            for depth in range(max_depth + 1):
                terms = ProductCalculus.expand_ir(chain, depth)
                value = _relative(grid, engine.apply_sum(terms, rhs), original)
                audit = ProductCalculus.exponent_audit(chain, terms)
                check = _check(f"expand_ir[{chain.describe()}, N={depth}]", value, IDENTITY_TOL,
                               note="" if audit else "exponent audit failed")
                if not audit:
                    check = check.model_copy(update={"verdict": Verdict.VIOLATION})
                results.append(check)
        return results

    @staticmethod
    def adjoint_law(profile: CoefficientProfile, d: int, z: complex, n: int = 256, r_max: float = 20.0) -> CheckResult:
        """Measure adjoint of P(z) against P(-conj z), entrywise on a small grid"""
        grid = SectorGrid(d, 0, r_max, n)
        adjoint = ResolventService.assemble_pz(profile, grid, z).adjoint().to_dense()
        mirrored = ResolventService.assemble_pz(profile, grid, -np.conj(complex(z))).to_dense()
        value = float(np.max(np.abs(adjoint - mirrored)) / np.max(np.abs(mirrored)))
        return _check("P(z)*=P(-conj z)", value, ADJOINT_TOL)

    @staticmethod
    def theta_consistency(profile: CoefficientProfile, grid: SectorGrid, z: complex, seed: int) -> List[CheckResult]:
        """theta_1 = d theta_2 / dz and theta_0 = d theta_1 / dz by central differences"""
        rhs = IdentityService.random_rhs(grid, seed)
        results = []
        for sigma in (2, 1):
            upper = ResolventService.assemble_factor(FactorKind.theta(sigma), profile, grid, z + THETA_STEP)
            lower = ResolventService.assemble_factor(FactorKind.theta(sigma), profile, grid, z - THETA_STEP)
            derived = ResolventService.assemble_factor(FactorKind.theta(sigma - 1), profile, grid, z).matvec(rhs)
            central = (upper.matvec(rhs) - lower.matvec(rhs)) / (2 * THETA_STEP)
            # theta_0 vanishes for w = 1
            results.append(_check(f"d/dz theta{sigma}=theta{sigma - 1}", _relative(grid, central, derived)
                                  if grid.norm(derived) > 0 else grid.norm(central), IDENTITY_TOL))
        return results

    @staticmethod
    def derivative_checks(
        profile: CoefficientProfile, grid: SectorGrid, z: complex, seed: int, max_order: int = 4
    ) -> List[CheckResult]:
        """Symbolic derivative sums against extrapolated finite differences, n = 1..max_order"""
        rhs = IdentityService.random_rhs(grid, seed)
        return [
            _check(f"derivative_terms n={n}", ResolventService.derivative_oracle(profile, grid, z, n, rhs), ORACLE_TOL)
            for n in range(1, max_order + 1)
        ]

    @staticmethod
    def coercivity(profile: CoefficientProfile, grid: SectorGrid, z: complex, seed: int) -> CheckResult:
        """Lax-Milgram witness on random vectors; positive for z in D_I"""
        rng = np.random.default_rng(seed)
        vectors = [rng.standard_normal(grid.n) + 1j * rng.standard_normal(grid.n) for _ in range(4)]
        ratio = ResolventService.coercivity_ratio(profile, grid, z, vectors)
        in_d_i = FrequencyPoint(complex(z)).in_d_i
        verdict = Verdict.CONSISTENT if ratio > 0 or not in_d_i else Verdict.VIOLATION
        return CheckResult(name="coercivity", value=ratio, threshold=0.0, verdict=verdict,
                           note="" if in_d_i else "z outside D_I (informational)")

    @staticmethod
    def run_all(
        profile: CoefficientProfile,
        grid: SectorGrid,
        z: complex,
        seed: int,
        max_depth: int = 3,
        max_order: int = 4,
        adjoint_n: int = 256,
    ) -> List[CheckResult]:
        checks = [
            IdentityService.solve_roundtrip(profile, grid, z, seed),
            IdentityService.difference_identity(profile, grid, z, seed),
            IdentityService.adjoint_law(profile, grid.d, z, adjoint_n),
            IdentityService.coercivity(profile, grid, z, seed),
        ]
        checks += IdentityService.expansion_identities(profile, grid, z, seed, max_depth)
        checks += IdentityService.theta_consistency(profile, grid, z, seed)
        checks += IdentityService.derivative_checks(profile, grid, z, seed, max_order)
        return checks


def _gamma_chains(max_k: int) -> Sequence:
    """(k, factors) for every gamma_0/gamma_1 chain with k <= max_k"""
    chains = [(0, ())]
    frontier = [()]
    for k in range(1, max_k + 1):
        frontier = [prefix + (FactorKind.gamma(j),) for prefix in frontier for j in (1, 0)]
        chains += [(k, factors) for factors in frontier]
    return chains
