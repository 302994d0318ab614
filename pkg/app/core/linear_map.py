"""
Matrix-free linear maps on sector grids
Composition, measure adjoints and power-iteration operator norms
"""
import logging
from dataclasses import dataclass
from typing import Callable, List, Optional

import numpy as np

from app.core.exceptions import ConvergenceError

logger = logging.getLogger(__name__)

Vector = np.ndarray


def measure_norm(x: Vector, weights: np.ndarray) -> float:
    """L2 norm in the quadrature measure sum_j q_j |x_j|^2"""
    return float(np.sqrt(np.sum(weights * np.abs(x) ** 2)))


@dataclass(frozen=True)
class LinearMap:
    """
    Operator given by its action and the action of its adjoint

    The adjoint is taken in the weighted inner product <u, v> = sum q u conj(v).
    """

    matvec: Callable[[Vector], Vector]
    rmatvec: Callable[[Vector], Vector]
    weights: np.ndarray

    @property
    def size(self) -> int:
        return self.weights.size

    @property
    def H(self) -> "LinearMap":
        return LinearMap(self.rmatvec, self.matvec, self.weights)

    def __call__(self, x: Vector) -> Vector:
        return self.matvec(x)

    def __matmul__(self, other: "LinearMap") -> "LinearMap":
        return LinearMap(
            matvec=lambda x: self.matvec(other.matvec(x)),
            rmatvec=lambda y: other.rmatvec(self.rmatvec(y)),
            weights=self.weights,
        )

    def __add__(self, other: "LinearMap") -> "LinearMap":
        return LinearMap(
            matvec=lambda x: self.matvec(x) + other.matvec(x),
            rmatvec=lambda y: self.rmatvec(y) + other.rmatvec(y),
            weights=self.weights,
        )

    def scaled(self, factor: complex) -> "LinearMap":
        return LinearMap(
            matvec=lambda x: factor * self.matvec(x),
            rmatvec=lambda y: np.conj(factor) * self.rmatvec(y),
            weights=self.weights,
        )

    @classmethod
    def identity(cls, weights: np.ndarray) -> "LinearMap":
        return cls(lambda x: np.array(x, copy=True), lambda y: np.array(y, copy=True), weights)

    @classmethod
    def diagonal(cls, values: np.ndarray, weights: np.ndarray) -> "LinearMap":
        """Multiplication by a node function"""
        values = np.asarray(values)
        conj_values = np.conj(values)
        return cls(lambda x: values * x, lambda y: conj_values * y, weights)

    def to_dense(self) -> np.ndarray:
        """Dense matrix of the map (columns = images of unit vectors); small grids only"""
        eye = np.eye(self.size)
        return np.column_stack([self.matvec(eye[:, j].astype(complex)) for j in range(self.size)])


@dataclass
class PowerResult:
    """Outcome of a power iteration"""

    norm: float
    iterations: int
    vector: Vector
    history: List[float]


def power_norm(
    op: LinearMap,
    seed: int = 20240601,
    tol: float = 1e-4,
    max_iter: int = 500,
    x0: Optional[Vector] = None,
    alert: bool = False,
) -> PowerResult:
    """
    Operator norm by power iteration on T^H T in the measure inner product

    Args:
        op: Linear map with measure adjoint
        seed: Seed of the complex Gaussian start vector
        tol: Relative change of the norm estimate that stops the iteration
        max_iter: Iteration cap
        x0: Optional start vector (overrides the seed)
        alert: Log the iteration count at INFO

    Returns:
        PowerResult: Norm estimate with diagnostics

    Raises:
        ConvergenceError: If the estimate is still moving after max_iter iterations
    """
    weights = op.weights
    if x0 is None:
        rng = np.random.default_rng(seed)
        x = rng.standard_normal(op.size) + 1j * rng.standard_normal(op.size)
    else:
        x = np.asarray(x0, dtype=complex)
    x = x / measure_norm(x, weights)

    history: List[float] = []
    ratio_old = float("inf")
    for iteration in range(max_iter):
        y = op.matvec(x)
        ratio = measure_norm(y, weights)
        history.append(ratio)
        if ratio == 0.0:
            # null map on this grid (e.g. theta_0 of the free profile)
            return PowerResult(0.0, iteration + 1, x, history)
        if abs(ratio - ratio_old) / ratio < tol:
            if alert:
                logger.info("power iteration converged at %d iterations", iteration + 1)
            return PowerResult(ratio, iteration + 1, x, history)
        ratio_old = ratio
        x = op.rmatvec(y)
        x_norm = measure_norm(x, weights)
        if x_norm == 0.0:
            return PowerResult(ratio, iteration + 1, x, history)
        x = x / x_norm

    raise ConvergenceError(
        "power iteration did not converge",
        context={"iterations": max_iter, "last_estimates": [round(v, 8) for v in history[-3:]]},
    )


def dense_measure_norm(op: LinearMap) -> float:
    """Exact operator norm via SVD of Q^{1/2} T Q^{-1/2}; oracle for small grids"""
    root = np.sqrt(op.weights)
    matrix = root[:, None] * op.to_dense() / root[None, :]
    return float(np.linalg.norm(matrix, 2))
