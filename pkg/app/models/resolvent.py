"""
Resolvent calculus models
Frequency points, operator factors and symbolic resolvent products
"""
from dataclasses import dataclass
from typing import Optional, Tuple
import cmath
import enum
import math

from app.core.exceptions import PreconditionError


class Region(str, enum.Enum):
    """Frequency regions of the low-frequency analysis"""
    D_I = "D_I"
    D_R_PLUS = "D_R_plus"
    D_R_MINUS = "D_R_minus"
    OTHER = "other"


@dataclass(frozen=True)
class FrequencyPoint:
    """Spectral parameter z in the upper half plane"""

    z: complex

    @classmethod
    def polar(cls, r: float, angle: float) -> "FrequencyPoint":
        return cls(complex(cmath.rect(r, angle)))

    @property
    def r(self) -> float:
        return abs(self.z)

    @property
    def angle(self) -> float:
        return cmath.phase(self.z)

    @property
    def in_d_i(self) -> bool:
        return self.z.imag > 0 and math.pi / 6 <= self.angle <= 5 * math.pi / 6

    @property
    def in_d_r_plus(self) -> bool:
        return 2 * self.z.real >= self.r ** 2

    @property
    def in_d_r_minus(self) -> bool:
        return -2 * self.z.real >= self.r ** 2

    @property
    def regions(self) -> Tuple[Region, ...]:
        """All regions containing z (D_I and D_R overlap near the diagonal)"""
        found = []
        if self.in_d_i:
            found.append(Region.D_I)
        if self.in_d_r_plus:
            found.append(Region.D_R_PLUS)
        if self.in_d_r_minus:
            found.append(Region.D_R_MINUS)
        return tuple(found) or (Region.OTHER,)

    @property
    def region_tag(self) -> Region:
        return self.regions[0]

    def __repr__(self):
        return f"<FrequencyPoint z={self.z:.6g} regions={[r.value for r in self.regions]}>"


class SlotKind(str, enum.Enum):
    """Which resolvent occupies a slot of a product"""
    PERTURBED_Z = "perturbed-at-z"
    PERTURBED_IR = "perturbed-at-ir"
    FREE_Z = "free-at-z"
    FREE_IR = "free-at-ir"

    @property
    def is_free(self) -> bool:
        return self in (SlotKind.FREE_Z, SlotKind.FREE_IR)

    @property
    def at_ir(self) -> bool:
        return self in (SlotKind.PERTURBED_IR, SlotKind.FREE_IR)


class FactorKind(str, enum.Enum):
    """Factors inserted between resolvents"""
    GAMMA0 = "gamma0"
    GAMMA1 = "gamma1"
    GAMMA2 = "gamma2"
    GAMMA0_FREE = "gamma0_free"
    GAMMA1_FREE = "gamma1_free"
    GAMMA2_FREE = "gamma2_free"
    THETA0 = "theta0"
    THETA1 = "theta1"
    THETA2 = "theta2"

    @property
    def index(self) -> int:
        """j for gamma_j, sigma for theta_sigma"""
        return int(self.value[-1] if self.is_theta else self.value[5])

    @property
    def is_theta(self) -> bool:
        return self.value.startswith("theta")

    @property
    def is_free(self) -> bool:
        return self.value.endswith("_free")

    @classmethod
    def gamma(cls, index: int, free: bool = False) -> "FactorKind":
        return cls(f"gamma{index}_free" if free else f"gamma{index}")

    @classmethod
    def theta(cls, sigma: int) -> "FactorKind":
        return cls(f"theta{sigma}")

    @property
    def symbol(self) -> str:
        if self.is_theta:
            return f"θ{self.index}"
        return f"γ{self.index}" + ("⁰" if self.is_free else "")


_SLOT_SYMBOL = {
    SlotKind.PERTURBED_Z: "R(z)",
    SlotKind.PERTURBED_IR: "R(ir)",
    SlotKind.FREE_Z: "R0(z)",
    SlotKind.FREE_IR: "R0(ir)",
}


@dataclass(frozen=True)
class ResolventProduct:
    """
    Product R_1 F_1 R_2 F_2 ... F_k R_{k+1} with a multiplicity

    Products may carry at most one theta bridge; slots left of it are perturbed
    resolvents and slots right of it free ones.
    """

    slots: Tuple[SlotKind, ...]
    factors: Tuple[FactorKind, ...] = ()
    multiplicity: int = 1
    shape: str = "chain"

    def __post_init__(self):
        if len(self.slots) != len(self.factors) + 1:
            raise PreconditionError(
                "a product needs one more resolvent than factors",
                context={"slots": len(self.slots), "factors": len(self.factors)},
            )
        if self.multiplicity < 1:
            raise PreconditionError("multiplicity must be >= 1", context={"multiplicity": self.multiplicity})
        bridges = [i for i, f in enumerate(self.factors) if f.is_theta]
        if len(bridges) > 1:
            raise PreconditionError("at most one theta bridge per product")
        if bridges:
            b = bridges[0]
            if any(s.is_free for s in self.slots[: b + 1]) or not all(s.is_free for s in self.slots[b + 1:]):
                raise PreconditionError("theta bridge must split perturbed (left) from free (right) slots")

    @property
    def k(self) -> int:
        """Number of inserted factors"""
        return len(self.factors)

    @property
    def index_sum(self) -> int:
        return sum(f.index for f in self.factors)

    @property
    def m(self) -> int:
        """Power count 2 * (#resolvents) - sum of factor indices"""
        return 2 * len(self.slots) - self.index_sum

    @property
    def bridge(self) -> Optional[int]:
        for i, f in enumerate(self.factors):
            if f.is_theta:
                return i
        return None

    @property
    def key(self) -> Tuple[Tuple[SlotKind, ...], Tuple[FactorKind, ...]]:
        return self.slots, self.factors

    def with_multiplicity(self, multiplicity: int) -> "ResolventProduct":
        return ResolventProduct(self.slots, self.factors, multiplicity, self.shape)

    def reversed(self) -> "ResolventProduct":
        """Slot/factor order of the adjoint product (evaluate at -conj(z))"""
        return ResolventProduct(self.slots[::-1], self.factors[::-1], self.multiplicity, self.shape)

    def describe(self) -> str:
        parts = [_SLOT_SYMBOL[self.slots[0]]]
        for factor, slot in zip(self.factors, self.slots[1:]):
            parts.append(factor.symbol)
            parts.append(_SLOT_SYMBOL[slot])
        text = "·".join(parts)
        return text if self.multiplicity == 1 else f"{self.multiplicity}·{text}"

    def __repr__(self):
        return f"<ResolventProduct {self.describe()} m={self.m}>"
