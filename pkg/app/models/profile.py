"""
Coefficient profile models
Radial functions with closed-form derivatives and the (g, w, a) triple they define
"""
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Tuple
import enum

import numpy as np


class CoefficientName(str, enum.Enum):
    """Coefficient a bump can be attached to"""
    G = "g"
    W = "w"
    A = "a"


class RadialFunction(ABC):
    """Even radial function with derivatives up to order 2"""

    max_order = 2

    @abstractmethod
    def derivative(self, r: np.ndarray, order: int = 0) -> np.ndarray:
        """Value (order 0) or radial derivative of the given order"""

    def __call__(self, r) -> np.ndarray:
        return self.derivative(np.asarray(r, dtype=float), 0)

    def __add__(self, other: "RadialFunction") -> "RadialFunction":
        return SumFunction((self, other))


@dataclass(frozen=True)
class ConstantFunction(RadialFunction):
    """phi(r) = value"""

    value: float = 0.0

    def derivative(self, r, order=0):
        r = np.asarray(r, dtype=float)
        if order == 0:
            return np.full_like(r, self.value)
        return np.zeros_like(r)


@dataclass(frozen=True)
class BracketPower(RadialFunction):
    """phi(r) = amplitude * <r>^{-exponent}, <r> = (1 + r^2)^{1/2}"""

    amplitude: float
    exponent: float

    def derivative(self, r, order=0):
        r = np.asarray(r, dtype=float)
        p = self.exponent
        base = 1.0 + r * r
        if order == 0:
            return self.amplitude * base ** (-p / 2)
        if order == 1:
            return -self.amplitude * p * r * base ** (-p / 2 - 1)
        if order == 2:
            return self.amplitude * (
                -p * base ** (-p / 2 - 1) + p * (p + 2) * r * r * base ** (-p / 2 - 2)
            )
        raise ValueError(f"derivative order {order} not available in closed form")


@dataclass(frozen=True)
class GaussianBump(RadialFunction):
    """
    Even Gaussian bump

    height * [exp(-(r-c)^2/s^2) + exp(-(r+c)^2/s^2)] for c > 0 and
    height * exp(-r^2/s^2) for c = 0, so the even extension is smooth at r = 0.
    """

    center: float
    width: float
    height: float

    def _image(self, x: np.ndarray, order: int) -> np.ndarray:
        s2 = self.width ** 2
        e = np.exp(-x * x / s2)
        if order == 0:
            return e
        if order == 1:
            return -2.0 * x / s2 * e
        if order == 2:
            return (4.0 * x * x / s2 ** 2 - 2.0 / s2) * e
        raise ValueError(f"derivative order {order} not available in closed form")

    def derivative(self, r, order=0):
        r = np.asarray(r, dtype=float)
        if self.center == 0.0:
            return self.height * self._image(r, order)
        return self.height * (self._image(r - self.center, order) + self._image(r + self.center, order))


@dataclass(frozen=True)
class SumFunction(RadialFunction):
    """Pointwise sum of radial functions"""

    terms: Tuple[RadialFunction, ...]

    def derivative(self, r, order=0):
        r = np.asarray(r, dtype=float)
        total = np.zeros_like(r)
        for term in self.terms:
            total = total + term.derivative(r, order)
        return total


@dataclass(frozen=True)
class Bump:
    """Additive bump attached to one coefficient"""

    target: CoefficientName
    center: float
    width: float
    height: float

    def function(self) -> GaussianBump:
        return GaussianBump(self.center, self.width, self.height)


@dataclass(frozen=True)
class CoefficientProfile:
    """
    Radial coefficient triple: g = 1 + g_pert, w = 1 + w_pert, a

    Immutable; share freely across workers.
    """

    d: int
    rho0: float
    g_amp: float
    w_amp: float
    a_amp: float
    g_pert: RadialFunction
    w_pert: RadialFunction
    a_fn: RadialFunction
    bumps: Tuple[Bump, ...] = field(default_factory=tuple)

    @property
    def is_free(self) -> bool:
        return self.g_amp == 0 and self.w_amp == 0 and self.a_amp == 0 and not self.bumps

    @property
    def is_undamped(self) -> bool:
        return self.a_amp == 0 and not any(b.target == CoefficientName.A for b in self.bumps)

    def g(self, r, order: int = 0) -> np.ndarray:
        value = self.g_pert.derivative(np.asarray(r, dtype=float), order)
        return value + 1.0 if order == 0 else value

    def w(self, r, order: int = 0) -> np.ndarray:
        value = self.w_pert.derivative(np.asarray(r, dtype=float), order)
        return value + 1.0 if order == 0 else value

    def a(self, r, order: int = 0) -> np.ndarray:
        return self.a_fn.derivative(np.asarray(r, dtype=float), order)

    def aw(self, r, order: int = 0) -> np.ndarray:
        """Product a*w and its first derivative"""
        if order == 0:
            return self.a(r) * self.w(r)
        if order == 1:
            return self.a(r, 1) * self.w(r) + self.a(r) * self.w(r, 1)
        raise ValueError("only order 0 and 1 are needed for a*w")

    def component(self, name: str) -> RadialFunction:
        """Perturbation part by name: 'g-1', 'w-1' or 'a'"""
        lookup = {"g-1": self.g_pert, "w-1": self.w_pert, "a": self.a_fn}
        try:
            return lookup[name]
        except KeyError:
            raise ValueError(f"unknown profile component {name!r}; expected one of {sorted(lookup)}")

    def __repr__(self):
        return (
            f"<CoefficientProfile d={self.d} rho0={self.rho0} g_amp={self.g_amp} "
            f"w_amp={self.w_amp} a_amp={self.a_amp} bumps={len(self.bumps)}>"
        )
