"""
Mourre service
Audits the conjugate-operator construction with the generator of dilations:
commutator identity, spectral cutoff, projected positivity and the hypothesis items
"""
import logging
import math
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.linalg import LinAlgError, eigh_tridiagonal, eigvalsh_tridiagonal

from app.core.exceptions import LabError, PreconditionError, SolverError
from app.core.fitting import fit_loglog
from app.core.linear_map import LinearMap
from app.models.profile import CoefficientProfile
from app.models.resolvent import FrequencyPoint
from app.models.sector import SectorGrid, SectorOperator, SymmetryTag
from app.schemas.report import (
    CheckResult,
    HypothesisItem,
    HypothesisReport,
    ItemStatus,
    MourreAudit,
    Verdict,
)
from app.services.operator_service import OperatorService
from app.services.resolvent_service import ResolventService

logger = logging.getLogger(__name__)

ETA_MAX = 1 / 32
ETA_SCAN = (1 / 32, 1 / 64, 1 / 128)
WINDOW_WEIGHT = 1e-8           # eigenvectors with smaller cutoff weight are outside Pi
POSITIVITY_TOL = 0.05          # margin >= -tol |z|^2 counts as positive
DILATION_BOUND = math.e
DILATION_ANGLES = (-1.0, -0.5, 0.5, 1.0)
DECOMPOSITION_TOL = 1e-12
DEFAULT_UPSILON = 10.0


def _step(t: np.ndarray) -> np.ndarray:
    out = np.zeros_like(t, dtype=float)
    positive = t > 0
    out[positive] = np.exp(-1.0 / t[positive])
    return out


def cutoff(x) -> np.ndarray:
    """
    Smooth even cutoff: 1 on [-1, 1], 0 outside (-2, 2), values in [0, 1]

    Built from the C^infinity step exp(-1/t) glued into a plateau.
    """
    t = 2.0 - np.abs(np.asarray(x, dtype=float))
    rise, fall = _step(t), _step(1.0 - t)
    return rise / (rise + fall)


def in_dissipative_region(z: complex) -> bool:
    """z in D_R^+: |z| <= 1, Im z > 0 and 2 Re z >= |z|^2"""
    point = FrequencyPoint(complex(z))
    return point.z.imag > 0 and point.r <= 1 and point.in_d_r_plus


def _require_dissipative_region(z: complex):
    if not in_dissipative_region(z):
        raise PreconditionError("z must lie in D_R^+ (|z| <= 1, Im z > 0, 2 Re z >= |z|^2)", context={"z": z})


def _symmetrized(operator: SectorOperator) -> Tuple[np.ndarray, np.ndarray]:
    """Diagonal and off-diagonal of S T S^{-1}, S = diag(sqrt(q)), for a real measure-selfadjoint T"""
    root = np.sqrt(operator.grid.weights)
    diag = np.real(operator.main_diagonal)
    off = np.real(operator.upper_diagonal) * root[:-1] / root[1:]
    return diag, off


def _eigh(operator: SectorOperator, limit: Optional[float] = None):
    """Eigenpairs of the symmetrized operator, all of them or those in [-limit, limit]"""
    diag, off = _symmetrized(operator)
    try:
        if limit is None:
            return eigh_tridiagonal(diag, off)
        if not eigvalsh_tridiagonal(diag, off, select="v", select_range=(-limit, limit)).size:
            return np.zeros(0), np.zeros((diag.size, 0))
        return eigh_tridiagonal(diag, off, select="v", select_range=(-limit, limit))
    except LinAlgError as exc:
        raise SolverError(f"tridiagonal eigensolver failed on {operator.grid!r}: {exc}")


def _default_vectors(grid: SectorGrid) -> List[np.ndarray]:
    """Gaussian bumps supported away from the origin and from r_max"""
    width = grid.r_max / 30
    return [grid.sample(lambda r, c=c: np.exp(-((r - c) / width) ** 2)) for c in (0.3 * grid.r_max, 0.45 * grid.r_max)]


def dilate(grid: SectorGrid, u: np.ndarray, theta: float) -> np.ndarray:
    """
    e^{i theta A} u = e^{d theta / 2} u(e^theta r)

    Cubic-spline interpolation of the node values; zero where e^theta r > r_max.
    """
    spline = CubicSpline(grid.nodes, u)
    stretched = math.exp(theta) * grid.nodes
    values = math.exp(grid.d * theta / 2) * spline(stretched)
    values[stretched > grid.r_max] = 0.0
    return values


def dilation_group_residual(grid: SectorGrid, u: np.ndarray, theta: float) -> float:
    """||e^{-i theta A} e^{i theta A} u - u|| / ||u||"""
    back = dilate(grid, dilate(grid, u, theta), -theta)
    return grid.norm(back - u) / grid.norm(u)


class MourreService:
    """Service for the conjugate-operator audit"""

    @staticmethod
    def commutator_remainder(profile: CoefficientProfile, grid: SectorGrid, z: complex) -> SectorOperator:
        """
        K(z) = K_1(z) + K_2(z)

        K_1 = div((r g') grad) - Im(z) r (aw)' + Re(z^2) r w',
        K_2 = -2 Im(z) aw + 2 Re(z^2) (w - 1).
        """
        z = complex(z)
        r = grid.nodes
        re_z2 = (z * z).real
        k1 = OperatorService.assemble_divergence(lambda s: s * profile.g(s, 1), grid)
        potential = (
            -z.imag * r * profile.aw(r, 1)
            + re_z2 * r * profile.w(r, 1)
            - 2 * z.imag * profile.aw(r)
            + 2 * re_z2 * (profile.w(r) - 1.0)
        )
        return k1 + SectorOperator.diagonal(grid, potential)

    @staticmethod
    def interior_commutator(operator: SectorOperator) -> SectorOperator:
        """[T, iA] = T (iA) - (iA) T with the discrete dilation generator"""
        symbol = OperatorService.dilation_symbol(operator.grid)
        return OperatorService.commutator(operator, symbol)

    @staticmethod
    def commutator_identity_residual(
        profile: CoefficientProfile,
        grid: SectorGrid,
        z: complex,
        vectors: Optional[Sequence[np.ndarray]] = None,
    ) -> float:
        """
        max ||([P_R, iA] - 2 P_R - 2 Re(z^2) - K(z)) phi|| / ||phi|| over test vectors

        Args:
            profile: Coefficient profile
            grid: Sector grid
            z: Point of D_R^+
            vectors: Test vectors supported away from both boundaries (default: two bumps)

        Returns:
            float: Largest relative residual; vanishes under grid refinement
        """
        z = complex(z)
        _require_dissipative_region(z)
        real_part = ResolventService.assemble_real_part(profile, grid, z)
        explicit = MourreService.interior_commutator(real_part)
        identity = real_part * 2.0 + (2 * (z * z).real) + MourreService.commutator_remainder(profile, grid, z)
        gap = explicit - identity
        vectors = _default_vectors(grid) if vectors is None else vectors
        return max(grid.norm(gap.matvec(u)) / grid.norm(u) for u in vectors)

    @staticmethod
    def identity_refinement(
        profile: CoefficientProfile, grid: SectorGrid, z: complex, levels: int = 3
    ) -> CheckResult:
        """
        Observed order of the commutator identity residual under h -> h/2

        CONSISTENT when the log-log slope in h is at least 1.
        """
        steps, residuals = [], []
        current = grid
        for _ in range(levels):
            residuals.append(MourreService.commutator_identity_residual(profile, current, z))
            steps.append(current.h)
            current = current.refined()
        fit = fit_loglog(steps, residuals)
        order = fit.slope if fit is not None and not fit.vanishing else float("inf")
        if fit is None:
            verdict = Verdict.INCONCLUSIVE
        else:
            verdict = Verdict.CONSISTENT if order >= 1.0 else Verdict.VIOLATION
        logger.info("commutator identity at z=%s: residuals %s, order %.3g", z, residuals, order)
        return CheckResult(
            name="commutator-identity-order",
            value=float(order),
            threshold=1.0,
            verdict=verdict,
            note=f"finest residual {residuals[-1]:.3e}",
        )

    @staticmethod
    def k_bound(profile: CoefficientProfile, grid: SectorGrid, z: complex, rho: Optional[float] = None,
                seed: int = 20240601, tol: float = 1e-4, max_iter: int = 500) -> float:
        """||K(z) <zx>^rho||_{L(H_z^1, H_z^{-1})} / |z|^2 with rho in (0, rho0), default rho0 / 2"""
        z = complex(z)
        rho = profile.rho0 / 2 if rho is None else rho
        if not 0 < rho < profile.rho0:
            raise PreconditionError("rho must lie in (0, rho0)", context={"rho": rho, "rho0": profile.rho0})
        remainder = MourreService.commutator_remainder(profile, grid, z).as_map()
        bracket = LinearMap.diagonal((1.0 + abs(z) ** 2 * grid.nodes ** 2) ** (rho / 2), grid.weights)
        result = ResolventService.sandwiched_norm(
            grid, remainder @ bracket, abs(z), s_left=-1.0, s_right=1.0, seed=seed, tol=tol, max_iter=max_iter,
        )
        return result.norm / abs(z) ** 2

    @staticmethod
    def spectral_projector(profile: CoefficientProfile, grid: SectorGrid, z: complex, eta: float) -> np.ndarray:
        """
        Dense Pi_{eta,z} = phi(P_R(z) / (eta |z|^2)); small grids only

        Returns:
            np.ndarray: Matrix acting on node values
        """
        z = complex(z)
        eigenvalues, vectors = _eigh(ResolventService.assemble_real_part(profile, grid, z))
        root = np.sqrt(grid.weights)
        weights = cutoff(eigenvalues / (eta * abs(z) ** 2))
        return (vectors * weights[None, :]) @ vectors.T * root[None, :] / root[:, None]

    @staticmethod
    def mourre_positivity(
        profile: CoefficientProfile,
        grid: SectorGrid,
        z: complex,
        eta: float,
        with_residual: bool = True,
    ) -> MourreAudit:
        """
        Smallest eigenvalue of Pi M Pi - (|z|^2 / 2) Pi^2 on the range of Pi

        M = 2 P_R + 2 Re(z^2) + K(z) realizes [P_R, iA]; Pi = phi_eta(P_R / |z|^2)
        is diagonal in the eigenbasis of P_R, so only eigenvectors with
        |lambda| < 2 eta |z|^2 enter.

        Args:
            profile: Coefficient profile
            grid: Sector grid
            z: Point of D_R^+
            eta: Cutoff width in (0, 1/32]
            with_residual: Also record the commutator identity residual

        Returns:
            MourreAudit: INCONCLUSIVE for an empty window, VIOLATION when the margin
            is below -0.05 |z|^2 where 2 Re(z^2) >= |z|^2

        Raises:
            PreconditionError: If z is outside D_R^+ or eta is outside (0, 1/32]
        """
        z = complex(z)
        _require_dissipative_region(z)
        if not 0 < eta <= ETA_MAX:
            raise PreconditionError("cutoff width must lie in (0, 1/32]", context={"eta": eta})
        scale = abs(z) ** 2
        real_part = ResolventService.assemble_real_part(profile, grid, z)
        limit = 2 * eta * scale
        eigenvalues, vectors = _eigh(real_part, limit)
        weights = cutoff(eigenvalues / (eta * scale))
        keep = weights > WINDOW_WEIGHT
        eigenvalues, vectors, weights = eigenvalues[keep], vectors[:, keep], weights[keep]
        residual = MourreService.commutator_identity_residual(profile, grid, z) if with_residual else None

        if not eigenvalues.size:
            logger.info("empty cutoff window at z=%s, eta=%g", z, eta)
            return MourreAudit(z_real=z.real, z_imag=z.imag, eta=eta, window_size=0,
                               commutator_residual=residual, verdict=Verdict.INCONCLUSIVE)

        root = np.sqrt(grid.weights)
        basis = vectors / root[:, None]
        remainder = MourreService.commutator_remainder(profile, grid, z).to_sparse()
        projected_k = basis.T @ (grid.weights[:, None] * (remainder @ basis))
        projected_k = 0.5 * (projected_k + projected_k.T)
        commutator = np.diag(2 * eigenvalues + 2 * (z * z).real) + projected_k
        block = weights[:, None] * commutator * weights[None, :] - 0.5 * scale * np.diag(weights ** 2)
        margin = float(np.linalg.eigvalsh(block).min())

        if margin >= -POSITIVITY_TOL * scale:
            verdict = Verdict.CONSISTENT
        elif 2 * (z * z).real >= scale:
            verdict = Verdict.VIOLATION
        else:
            # 2 Re(z^2) < |z|^2: the identity alone does not force positivity here
            verdict = Verdict.INCONCLUSIVE
        logger.debug("positivity z=%s eta=%g: window %d, margin %.4g |z|^2", z, eta, eigenvalues.size, margin / scale)
        return MourreAudit(
            z_real=z.real,
            z_imag=z.imag,
            eta=eta,
            window_size=int(eigenvalues.size),
            positivity_margin=margin,
            margin_ratio=margin / scale,
            commutator_residual=residual,
            verdict=verdict,
        )

    @staticmethod
    def best_positivity(
        profile: CoefficientProfile, grid: SectorGrid, z: complex, etas: Sequence[float] = ETA_SCAN
    ) -> MourreAudit:
        """Positivity audit with the best margin over the eta scan"""
        best: Optional[MourreAudit] = None
        residual = MourreService.commutator_identity_residual(profile, grid, z)
        for eta in etas:
            audit = MourreService.mourre_positivity(profile, grid, z, eta, with_residual=False)
            if audit.positivity_margin is None:
                best = best or audit
                continue
            if best is None or best.positivity_margin is None or audit.positivity_margin > best.positivity_margin:
                best = audit
        return best.model_copy(update={"commutator_residual": residual})

    @staticmethod
    def positivity_along_ray(
        profile: CoefficientProfile,
        grid: SectorGrid,
        radii: Sequence[float],
        angle: float,
        with_k_bound: bool = True,
    ) -> List[MourreAudit]:
        """best_positivity at z = r e^{i angle}, one audit per radius"""
        audits = []
        for r in radii:
            z = r * complex(math.cos(angle), math.sin(angle))
            audit = MourreService.best_positivity(profile, grid, z)
            if with_k_bound and not profile.is_free:
                try:
                    audit = audit.model_copy(update={"k_bound": MourreService.k_bound(profile, grid, z)})
                except LabError as exc:
                    logger.warning("K bound at z=%s failed: %s", z, exc)
            elif with_k_bound:
                audit = audit.model_copy(update={"k_bound": 0.0})
            audits.append(audit)
        return audits

    @staticmethod
    def hypothesis_report(
        profile: CoefficientProfile,
        grid: SectorGrid,
        z: complex,
        upsilon: float = DEFAULT_UPSILON,
        seed: int = 20240601,
        tol: float = 1e-4,
        max_iter: int = 500,
    ) -> HypothesisReport:
        """
        Measure the checkable conjugate-operator items at one z for Q_z = P(z) / |z|^2

        H1 L^2 <= H_z^1, H2 dilations bounded on H_z^1 by e, H3a/H3b norms of Q_z and
        [Q_z, iA] in L(H_z^1, H_z^{-1}), H4a the split Q_z = Q_perp - i Q_perp^+,
        H4-nonneg Q_perp^+ >= 0, H4b bounds on Q_perp^+ and on Pi in H_z^1,
        H5 projected positivity. Higher commutators and the inverse of Q_perp are SKIPPED.

        Raises:
            PreconditionError: If z is outside D_R^+
        """
        z = complex(z)
        _require_dissipative_region(z)
        scale = abs(z) ** 2
        sobolev = OperatorService.sobolev_scale(grid, abs(z))
        power = dict(seed=seed, tol=tol, max_iter=max_iter)
        items: List[HypothesisItem] = []

        def bounded(name: str, value: float, bound: float, reason: str = "") -> HypothesisItem:
            status = ItemStatus.PASS if value <= bound else ItemStatus.FAIL
            return HypothesisItem(name=name, status=status, value=float(value), bound=float(bound), reason=reason)

        def dual_norm(operator: SectorOperator) -> float:
            core = operator.as_map().scaled(1.0 / scale)
            return ResolventService.sandwiched_norm(grid, core, abs(z), s_left=-1.0, s_right=1.0, **power).norm

        def guarded(name: str, bound: float, measure) -> HypothesisItem:
            try:
                return bounded(name, measure(), bound)
            except LabError as exc:
                return HypothesisItem(name=name, status=ItemStatus.SKIPPED, bound=bound, reason=str(exc))

        rng = np.random.default_rng(seed)
        samples = [rng.standard_normal(grid.n) for _ in range(4)] + _default_vectors(grid)
        items.append(bounded("H1", max(grid.norm(u) / sobolev.norm(1.0, u) for u in samples), upsilon))

        smooth = grid.sample(lambda r: np.exp(-((r - 0.1 * grid.r_max) / (grid.r_max / 60)) ** 2))
        ratios = [sobolev.norm(1.0, dilate(grid, smooth, theta)) / sobolev.norm(1.0, smooth) for theta in DILATION_ANGLES]
        items.append(bounded("H2", max(ratios), DILATION_BOUND, reason="theta in {-1, -0.5, 0.5, 1}"))

        pz = ResolventService.assemble_pz(profile, grid, z)
        items.append(guarded("H3a", upsilon, lambda: dual_norm(pz)))
        items.append(guarded("H3b", upsilon, lambda: dual_norm(MourreService.interior_commutator(pz))))
        items.append(HypothesisItem(name="H3c", status=ItemStatus.SKIPPED,
                                    reason="commutators of order >= 2 are not audited"))

        w_nodes, aw_nodes = profile.w(grid.nodes), profile.aw(grid.nodes)
        w_min = float(np.min(w_nodes))
        im_z2 = (z * z).imag
        real_part = ResolventService.assemble_real_part(profile, grid, z)
        perp = real_part - SectorOperator.diagonal(grid, np.full(grid.n, 1j * im_z2 * w_min), SymmetryTag.GENERAL)
        plus = (im_z2 * (w_nodes - w_min) + z.real * aw_nodes) / scale
        gap = [grid.norm(pz.matvec(u) / scale - (perp.matvec(u) / scale - 1j * plus * u)) / grid.norm(pz.matvec(u) / scale)
               for u in samples]
        items.append(bounded("H4a", max(gap), DECOMPOSITION_TOL, reason="Q_z = Q_perp - i Q_perp^+"))
        lowest = float(np.min(plus))
        items.append(HypothesisItem(
            name="H4-nonneg",
            status=ItemStatus.PASS if lowest >= -1e-14 else ItemStatus.FAIL,
            value=lowest,
            bound=0.0,
            reason="Im(z^2)(w - w_min) + Re(z) aw >= 0 pointwise",
        ))

        def plus_and_projector() -> float:
            plus_norm = ResolventService.sandwiched_norm(
                grid, LinearMap.diagonal(plus, grid.weights), abs(z), s_left=-1.0, s_right=1.0, **power
            ).norm
            limit = 2 * ETA_MAX * scale
            _, vectors = _eigh(real_part, limit)
            basis = vectors / np.sqrt(grid.weights)[:, None]
            lift = max((sobolev.norm(1.0, basis[:, k]) / grid.norm(basis[:, k]) for k in range(basis.shape[1])),
                       default=0.0)
            return max(plus_norm, lift)

        items.append(guarded("H4b", upsilon, plus_and_projector))
        items.append(HypothesisItem(name="H4c", status=ItemStatus.SKIPPED,
                                    reason="inverse of Q_perp off the window is covered by the resolvent scans"))

        audit = MourreService.best_positivity(profile, grid, z)
        if audit.verdict == Verdict.INCONCLUSIVE and audit.positivity_margin is None:
            items.append(HypothesisItem(name="H5", status=ItemStatus.SKIPPED, reason="empty cutoff window"))
        else:
            items.append(HypothesisItem(
                name="H5",
                status=ItemStatus.PASS if audit.margin_ratio >= -POSITIVITY_TOL else ItemStatus.FAIL,
                value=audit.margin_ratio,
                bound=-POSITIVITY_TOL,
                reason=f"eta={audit.eta:g}, window {audit.window_size}",
            ))
        failed = [item.name for item in items if item.status == ItemStatus.FAIL]
        if failed:
            logger.warning("hypothesis items failed at z=%s: %s", z, failed)
        return HypothesisReport(z_real=z.real, z_imag=z.imag, upsilon=upsilon, items=items)
