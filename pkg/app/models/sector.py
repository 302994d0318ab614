"""
Sector grid and banded sector operators
One spherical-harmonic sector of L^2(R^d) on a uniform radial grid
"""
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Union
import enum

import numpy as np

from app.core.banded import (
    BAND_HALF_WIDTH,
    banded_matvec,
    banded_transpose,
    bands_to_sparse,
    sparse_to_bands,
)
from app.core.exceptions import PreconditionError
from app.core.linear_map import LinearMap, measure_norm


class SymmetryTag(str, enum.Enum):
    """Known symmetry of an assembled operator"""
    SELFADJOINT = "selfadjoint-in-measure"
    GENERAL = "general"


@dataclass(frozen=True)
class SectorGrid:
    """
    Uniform grid r_j = j h, j = 1..n, h = r_max / (n + 1)

    Quadrature weights q_j = r_j^{d-1} h realize the L^2(R^d) measure sector-wise.
    """

    d: int
    ell: int
    r_max: float
    n: int

    def __post_init__(self):
        if self.d < 1:
            raise PreconditionError("dimension must be positive", context={"d": self.d})
        if self.ell < 0:
            raise PreconditionError("sector index must be >= 0", context={"ell": self.ell})
        if self.n < 4:
            raise PreconditionError("grid needs at least 4 nodes", context={"n": self.n})
        if not self.r_max > 0:
            raise PreconditionError("r_max must be positive", context={"r_max": self.r_max})

    @cached_property
    def h(self) -> float:
        return self.r_max / (self.n + 1)

    @cached_property
    def nodes(self) -> np.ndarray:
        return self.h * np.arange(1, self.n + 1)

    @cached_property
    def weights(self) -> np.ndarray:
        return self.nodes ** (self.d - 1) * self.h

    @cached_property
    def centrifugal(self) -> float:
        """ell (ell + d - 2), the angular eigenvalue of the sector"""
        return float(self.ell * (self.ell + self.d - 2))

    def inner(self, u: np.ndarray, v: np.ndarray) -> complex:
        return complex(np.sum(self.weights * u * np.conj(v)))

    def norm(self, u: np.ndarray) -> float:
        return measure_norm(u, self.weights)

    def ball_norm(self, u: np.ndarray, radius: float) -> float:
        """L^2(B(radius)) norm by quadrature restricted to r <= radius"""
        mask = self.nodes <= radius
        return measure_norm(u[mask], self.weights[mask])

    def sample(self, fn: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
        return np.asarray(fn(self.nodes))

    def with_ell(self, ell: int) -> "SectorGrid":
        return SectorGrid(self.d, ell, self.r_max, self.n)

    def refined(self) -> "SectorGrid":
        """Same r_max with h halved; the old nodes stay nodes"""
        return SectorGrid(self.d, self.ell, self.r_max, 2 * (self.n + 1) - 1)

    def __repr__(self):
        return f"<SectorGrid d={self.d} ell={self.ell} r_max={self.r_max} n={self.n}>"


Operand = Union["SectorOperator", np.ndarray]


class SectorOperator:
    """
    Pentadiagonal-or-narrower operator on a sector grid

    ``bands`` uses the solve_banded layout with two bands on each side.
    Immutable after construction.
    """

    def __init__(self, grid: SectorGrid, bands: np.ndarray, symmetry: SymmetryTag = SymmetryTag.GENERAL):
        if bands.shape != (2 * BAND_HALF_WIDTH + 1, grid.n):
            raise ValueError(f"band array of shape {bands.shape} does not match {grid!r}")
        bands = np.array(bands, copy=True)
        bands.setflags(write=False)
        self.grid = grid
        self.bands = bands
        self.symmetry = symmetry

    @classmethod
    def diagonal(cls, grid: SectorGrid, values: np.ndarray, symmetry: SymmetryTag = None) -> "SectorOperator":
        values = np.asarray(values)
        bands = np.zeros((2 * BAND_HALF_WIDTH + 1, grid.n), dtype=np.result_type(values, float))
        bands[BAND_HALF_WIDTH] = values
        if symmetry is None:
            symmetry = SymmetryTag.SELFADJOINT if np.isrealobj(values) else SymmetryTag.GENERAL
        return cls(grid, bands, symmetry)

    @classmethod
    def identity(cls, grid: SectorGrid) -> "SectorOperator":
        return cls.diagonal(grid, np.ones(grid.n))

    @classmethod
    def from_sparse(cls, grid: SectorGrid, matrix, symmetry: SymmetryTag = SymmetryTag.GENERAL) -> "SectorOperator":
        return cls(grid, sparse_to_bands(matrix), symmetry)

    @property
    def dtype(self):
        return self.bands.dtype

    @property
    def main_diagonal(self) -> np.ndarray:
        return self.bands[BAND_HALF_WIDTH]

    @property
    def upper_diagonal(self) -> np.ndarray:
        """A[j, j+1], length n-1"""
        return self.bands[BAND_HALF_WIDTH - 1, 1:]

    @property
    def lower_diagonal(self) -> np.ndarray:
        """A[j+1, j], length n-1"""
        return self.bands[BAND_HALF_WIDTH + 1, :-1]

    def matvec(self, x: np.ndarray) -> np.ndarray:
        return banded_matvec(self.bands, np.asarray(x))

    def to_sparse(self):
        return bands_to_sparse(self.bands)

    def to_dense(self) -> np.ndarray:
        return self.to_sparse().toarray()

    def adjoint(self) -> "SectorOperator":
        """Adjoint in the measure inner product: Q^{-1} A^H Q"""
        q = self.grid.weights
        size = self.grid.n
        bands = np.conj(banded_transpose(self.bands))
        for offset in range(-BAND_HALF_WIDTH, BAND_HALF_WIDTH + 1):
            row = BAND_HALF_WIDTH - offset
            # entry (i, j) with j = i + offset scales by q_j / q_i
            cols = np.arange(max(offset, 0), size + min(offset, 0))
            bands[row, cols] = bands[row, cols] * q[cols] / q[cols - offset]
        return SectorOperator(self.grid, bands, self.symmetry)

    def as_map(self) -> LinearMap:
        adjoint = self.adjoint()
        return LinearMap(self.matvec, adjoint.matvec, self.grid.weights)

    def left_scale(self, values: np.ndarray) -> "SectorOperator":
        """diag(values) @ self"""
        bands = np.array(self.bands, dtype=np.result_type(self.bands, values))
        size = self.grid.n
        for offset in range(-BAND_HALF_WIDTH, BAND_HALF_WIDTH + 1):
            row = BAND_HALF_WIDTH - offset
            cols = np.arange(max(offset, 0), size + min(offset, 0))
            bands[row, cols] = bands[row, cols] * values[cols - offset]
        return SectorOperator(self.grid, bands, SymmetryTag.GENERAL)

    def right_scale(self, values: np.ndarray) -> "SectorOperator":
        """self @ diag(values)"""
        bands = np.array(self.bands, dtype=np.result_type(self.bands, values)) * np.asarray(values)[None, :]
        return SectorOperator(self.grid, bands, SymmetryTag.GENERAL)

    def residual_selfadjoint(self, rng: np.random.Generator) -> float:
        """|<Tu,v> - <u,Tv>| / (||Tu|| ||v|| + ||u|| ||Tv||) on random real vectors"""
        u = rng.standard_normal(self.grid.n)
        v = rng.standard_normal(self.grid.n)
        tu, tv = self.matvec(u), self.matvec(v)
        scale = self.grid.norm(tu) * self.grid.norm(v) + self.grid.norm(u) * self.grid.norm(tv)
        return abs(self.grid.inner(tu, v) - self.grid.inner(u, tv)) / scale

    def _check_grid(self, other: "SectorOperator"):
        if other.grid != self.grid:
            raise ValueError(f"grid mismatch: {self.grid!r} vs {other.grid!r}")

    def __add__(self, other: "SectorOperator") -> "SectorOperator":
        if np.isscalar(other):
            return self + SectorOperator.identity(self.grid) * other
        self._check_grid(other)
        symmetry = SymmetryTag.SELFADJOINT if (
            self.symmetry == other.symmetry == SymmetryTag.SELFADJOINT
        ) else SymmetryTag.GENERAL
        return SectorOperator(self.grid, self.bands + other.bands, symmetry)

    def __radd__(self, other):
        return self.__add__(other)

    def __neg__(self) -> "SectorOperator":
        return SectorOperator(self.grid, -self.bands, self.symmetry)

    def __sub__(self, other) -> "SectorOperator":
        return self + (-other)

    def __mul__(self, factor) -> "SectorOperator":
        symmetry = self.symmetry if np.isrealobj(factor) else SymmetryTag.GENERAL
        return SectorOperator(self.grid, self.bands * factor, symmetry)

    __rmul__ = __mul__

    def __matmul__(self, other: Operand):
        if isinstance(other, SectorOperator):
            self._check_grid(other)
            product = self.to_sparse() @ other.to_sparse()
            return SectorOperator.from_sparse(self.grid, product)
        return self.matvec(other)

    def __repr__(self):
        return f"<SectorOperator {self.symmetry.value} dtype={self.dtype} on {self.grid!r}>"
