"""
Operator service
Assembles per-sector radial operators: divergence-form Laplacians, multipliers,
radial derivative, generator of dilations and the D_r Sobolev scale
"""
import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Union

import numpy as np
from scipy.linalg import LinAlgError, eigh_tridiagonal

from app.core.banded import bands_from_diagonals
from app.core.exceptions import PreconditionError, SolverError
from app.core.linear_map import LinearMap
from app.models.profile import CoefficientProfile
from app.models.sector import SectorGrid, SectorOperator, SymmetryTag

logger = logging.getLogger(__name__)

NodeFunction = Union[Callable[[np.ndarray], np.ndarray], np.ndarray, float]


def _node_values(fn: NodeFunction, grid: SectorGrid) -> np.ndarray:
    if callable(fn):
        return np.asarray(fn(grid.nodes))
    values = np.asarray(fn)
    if values.ndim == 0:
        return np.full(grid.n, values.item())
    if values.shape != (grid.n,):
        raise ValueError(f"node values of shape {values.shape} do not match {grid!r}")
    return values


@dataclass(frozen=True, eq=False)
class FreeSpectrum:
    """
    Eigendecomposition of the free sector Laplacian -Delta^(ell)

    ``vectors`` are the orthonormal eigenvectors of the symmetrized matrix
    S (-Delta) S^{-1}, S = diag(sqrt(q)); e_k = vectors[:, k] / sqrt(q) is
    orthonormal in the measure inner product.
    """

    grid: SectorGrid
    eigenvalues: np.ndarray
    vectors: np.ndarray

    @property
    def root_weights(self) -> np.ndarray:
        return np.sqrt(self.grid.weights)

    def coefficients(self, u: np.ndarray) -> np.ndarray:
        """c_k = <u, e_k>"""
        return self.vectors.T @ (self.root_weights * u)

    def synthesize(self, coeffs: np.ndarray) -> np.ndarray:
        return (self.vectors @ coeffs) / self.root_weights

    def eigenvector(self, k: int) -> np.ndarray:
        return self.vectors[:, k] / self.root_weights

    def apply_multiplier(self, values: np.ndarray, u: np.ndarray) -> np.ndarray:
        """m(-Delta) u for the spectral multiplier sampled at the eigenvalues"""
        return self.synthesize(values * self.coefficients(u))


@dataclass(frozen=True, eq=False)
class SobolevScale:
    """H_r^s scale with norm ||<D_r>^s u||, D_r = sqrt(-Delta) / r"""

    spectrum: FreeSpectrum
    r: float

    @property
    def grid(self) -> SectorGrid:
        return self.spectrum.grid

    def multiplier(self, s: float) -> np.ndarray:
        return (1.0 + self.spectrum.eigenvalues / self.r ** 2) ** (s / 2)

    def apply(self, s: float, u: np.ndarray) -> np.ndarray:
        if s == 0:
            return np.array(u, copy=True)
        return self.spectrum.apply_multiplier(self.multiplier(s), u)

    def norm(self, s: float, u: np.ndarray) -> float:
        return float(np.linalg.norm(self.multiplier(s) * self.spectrum.coefficients(u)))

    def as_map(self, s: float) -> LinearMap:
        """<D_r>^s as a selfadjoint linear map"""
        op = lambda u: self.apply(s, u)
        return LinearMap(op, op, self.grid.weights)


class OperatorService:
    """Service assembling banded sector operators"""

    @staticmethod
    def assemble_divergence(coefficient: NodeFunction, grid: SectorGrid) -> SectorOperator:
        """
        Sector form of div(c grad) for a radial coefficient c

        Conservative three-point scheme with the angular term -c ell(ell+d-2)/r^2.
        Origin: ghost reflection u_0 = u_1 for ell = 0, Dirichlet for ell >= 1.
        Dirichlet at r_max.

        Args:
            coefficient: Callable c(r) (evaluated at nodes and half nodes) or a constant
            grid: Sector grid

        Returns:
            SectorOperator: Real tridiagonal operator, selfadjoint in the measure
        """
        h, d, n = grid.h, grid.d, grid.n
        r = grid.nodes
        half = h * (np.arange(0, n + 1) + 0.5)
        if callable(coefficient):
            c_half, c_node = np.asarray(coefficient(half), dtype=float), np.asarray(coefficient(r), dtype=float)
        else:
            c_half = np.full(n + 1, float(coefficient))
            c_node = np.full(n, float(coefficient))

        flux = c_half * half ** (d - 1)       # c r^{d-1} at r_{j-1/2}, j = 1..n+1
        scale = r ** (1 - d) / h ** 2
        c_minus, c_plus = flux[:-1], flux[1:]

        main = -scale * (c_minus + c_plus) - c_node * grid.centrifugal / r ** 2
        if grid.ell == 0:
            # ghost node: no flux through r_{1/2}
            main[0] += scale[0] * c_minus[0]
        upper = scale[:-1] * flux[1:n]
        lower = scale[1:] * flux[1:n]
        return SectorOperator(grid, bands_from_diagonals(main, lower, upper), SymmetryTag.SELFADJOINT)

    @staticmethod
    def assemble_laplacian(profile: CoefficientProfile, grid: SectorGrid) -> SectorOperator:
        """
        Delta_G = div(g grad) on one sector

        Args:
            profile: Coefficient profile (only g is used)
            grid: Sector grid

        Returns:
            SectorOperator: Selfadjoint (in measure) tridiagonal operator
        """
        return OperatorService.assemble_divergence(profile.g, grid)

    @staticmethod
    def assemble_free_laplacian(grid: SectorGrid) -> SectorOperator:
        return OperatorService.assemble_divergence(1.0, grid)

    @staticmethod
    def assemble_multiplier(fn: NodeFunction, grid: SectorGrid) -> SectorOperator:
        """Diagonal operator, exact on nodes"""
        return SectorOperator.diagonal(grid, _node_values(fn, grid))

    @staticmethod
    def weight(grid: SectorGrid, delta: float) -> np.ndarray:
        """Node values of <r>^{-delta}"""
        return (1.0 + grid.nodes ** 2) ** (-delta / 2)

    @staticmethod
    def assemble_radial_derivative(grid: SectorGrid) -> SectorOperator:
        """Centered d/dr with the sector boundary conventions"""
        n, h = grid.n, grid.h
        main = np.zeros(n)
        upper = np.full(n - 1, 1.0 / (2 * h))
        lower = np.full(n - 1, -1.0 / (2 * h))
        if grid.ell == 0:
            main[0] = -1.0 / (2 * h)    # u_0 = u_1
        return SectorOperator(grid, bands_from_diagonals(main, lower, upper), SymmetryTag.GENERAL)

    @staticmethod
    def dilation_symbol(grid: SectorGrid) -> SectorOperator:
        """
        iA: the measure-skew part of d/2 + r d/dr

        Taking the exact skew part keeps A selfadjoint at fixed h while staying
        second-order consistent with d/2 + r d/dr on interior nodes.
        """
        derivative = OperatorService.assemble_radial_derivative(grid)
        generator = derivative.left_scale(grid.nodes) + SectorOperator.identity(grid) * (grid.d / 2)
        skew = (generator - generator.adjoint()) * 0.5
        return SectorOperator(grid, skew.bands, SymmetryTag.GENERAL)

    @staticmethod
    def assemble_dilation_generator(grid: SectorGrid) -> SectorOperator:
        """
        Generator of dilations A = -i (d/2 + r d/dr) on one sector

        Args:
            grid: Sector grid

        Returns:
            SectorOperator: Complex tridiagonal operator, selfadjoint in the measure
        """
        symbol = OperatorService.dilation_symbol(grid)
        return SectorOperator(grid, -1j * symbol.bands, SymmetryTag.SELFADJOINT)

    @staticmethod
    def commutator(left: SectorOperator, right: SectorOperator) -> SectorOperator:
        """[left, right] = left right - right left"""
        return (left @ right) - (right @ left)

    @staticmethod
    def free_spectrum(grid: SectorGrid) -> FreeSpectrum:
        """Eigenpairs of the free sector Laplacian (cached per grid)"""
        return _free_spectrum(grid)

    @staticmethod
    def sobolev_scale(grid: SectorGrid, r: float) -> SobolevScale:
        """
        D_r Sobolev scale of the sector

        Args:
            grid: Sector grid
            r: Frequency scale in (0, 1]

        Returns:
            SobolevScale: apply/norm for any real s

        Raises:
            PreconditionError: If r is outside (0, 1]
            SolverError: If the tridiagonal eigensolver fails
        """
        if not 0 < r <= 1:
            raise PreconditionError("Sobolev scale needs r in (0, 1]", context={"r": r})
        return SobolevScale(_free_spectrum(grid), float(r))


@lru_cache(maxsize=8)
def _free_spectrum(grid: SectorGrid) -> FreeSpectrum:
    laplacian = OperatorService.assemble_free_laplacian(grid)
    root = np.sqrt(grid.weights)
    diag = -laplacian.main_diagonal
    off = -laplacian.upper_diagonal * root[:-1] / root[1:]
    try:
        eigenvalues, vectors = eigh_tridiagonal(diag, off)
    except LinAlgError as exc:
        raise SolverError(f"tridiagonal eigensolver failed on {grid!r}: {exc}")
    # -Delta is positive; clip rounding noise
    eigenvalues = np.clip(eigenvalues, 0.0, None)
    logger.debug("free spectrum on %r: lambda_1=%.6g lambda_max=%.6g", grid, eigenvalues[0], eigenvalues[-1])
    return FreeSpectrum(grid, eigenvalues, vectors)
