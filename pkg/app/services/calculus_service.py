"""
Product calculus service
Symbolic derivatives, differences and R(ir)-expansions of resolvent products
"""
import logging
from collections import OrderedDict
from math import factorial
from typing import Dict, Iterable, List, Tuple

from app.core.exceptions import PreconditionError
from app.models.resolvent import FactorKind, ResolventProduct, SlotKind

logger = logging.getLogger(__name__)

MAX_DERIVATIVE_ORDER = 6

# d/dz of each factor; None means the derivative vanishes
_FACTOR_DERIVATIVE = {
    FactorKind.GAMMA1: FactorKind.GAMMA0,
    FactorKind.GAMMA0: None,
    FactorKind.GAMMA1_FREE: FactorKind.GAMMA0_FREE,
    FactorKind.GAMMA0_FREE: None,
    FactorKind.THETA2: FactorKind.THETA1,
    FactorKind.THETA1: FactorKind.THETA0,
    FactorKind.THETA0: None,
}


def _sort_key(product: ResolventProduct):
    return (
        len(product.factors),
        tuple(f.value for f in product.factors),
        tuple(s.value for s in product.slots),
    )


def collect(products: Iterable[ResolventProduct]) -> List[ResolventProduct]:
    """Merge equal products by adding multiplicities; deterministic order"""
    merged: Dict[Tuple, ResolventProduct] = OrderedDict()
    for product in products:
        known = merged.get(product.key)
        if known is None:
            merged[product.key] = product
        else:
            merged[product.key] = known.with_multiplicity(known.multiplicity + product.multiplicity)
    return sorted(merged.values(), key=_sort_key)


def concatenate(left: ResolventProduct, bridge: FactorKind, right: ResolventProduct, multiplicity: int = 1) -> ResolventProduct:
    """left · bridge · right"""
    return ResolventProduct(
        slots=left.slots + right.slots,
        factors=left.factors + (bridge,) + right.factors,
        multiplicity=left.multiplicity * right.multiplicity * multiplicity,
        shape="bridged" if bridge.is_theta else left.shape,
    )


def _gamma_product(ir_indices: Tuple[int, ...], boundary: int = None, z_indices: Tuple[int, ...] = None,
                   multiplicity: int = 1) -> ResolventProduct:
    """R(ir) gamma ... R(ir) [gamma_boundary R(z) gamma ... R(z)]"""
    slots = (SlotKind.PERTURBED_IR,) * (len(ir_indices) + 1)
    factors = tuple(FactorKind.gamma(j) for j in ir_indices)
    if boundary is None:
        return ResolventProduct(slots, factors, multiplicity, shape="ir")
    slots = slots + (SlotKind.PERTURBED_Z,) * (len(z_indices) + 1)
    factors = factors + (FactorKind.gamma(boundary),) + tuple(FactorKind.gamma(j) for j in z_indices)
    return ResolventProduct(slots, factors, multiplicity, shape="ir-split")


def _split(product: ResolventProduct) -> Tuple[Tuple[int, ...], int, Tuple[int, ...]]:
    """(ir indices, boundary index, z indices) of an R(ir)-expansion term"""
    n_ir = sum(1 for s in product.slots if s.at_ir)
    indices = tuple(f.index for f in product.factors)
    if n_ir == len(product.slots):
        return indices, None, ()
    return indices[: n_ir - 1], indices[n_ir - 1], indices[n_ir:]


def chain_m(indices: Tuple[int, ...]) -> int:
    """m(k, j) = 2(k+1) - |j|"""
    return 2 * (len(indices) + 1) - sum(indices)


class ProductCalculus:
    """Service for the symbolic algebra of resolvent products"""

    @staticmethod
    def differentiate(product: ResolventProduct) -> List[ResolventProduct]:
        """
        d/dz of one product by the Leibniz rule

        D[R] = R gamma_1 R, D[gamma_1] = gamma_0, D[gamma_0] = 0, and likewise for the
        free factors; D[theta_2] = theta_1, D[theta_1] = theta_0, D[theta_0] = 0.

        Raises:
            PreconditionError: For non-holomorphic slots (R(ir)) or factors (gamma_2)
        """
        terms: List[ResolventProduct] = []
        for i, slot in enumerate(product.slots):
            if slot.at_ir:
                raise PreconditionError("R(ir) depends on |z| only and has no complex derivative")
            inserted = FactorKind.gamma(1, free=slot.is_free)
            terms.append(ResolventProduct(
                slots=product.slots[: i + 1] + product.slots[i:],
                factors=product.factors[:i] + (inserted,) + product.factors[i:],
                multiplicity=product.multiplicity,
                shape=product.shape,
            ))
        for i, factor in enumerate(product.factors):
            if factor not in _FACTOR_DERIVATIVE:
                raise PreconditionError(f"{factor.symbol} is not holomorphic in z")
            derived = _FACTOR_DERIVATIVE[factor]
            if derived is None:
                continue
            terms.append(ResolventProduct(
                slots=product.slots,
                factors=product.factors[:i] + (derived,) + product.factors[i + 1:],
                multiplicity=product.multiplicity,
                shape=product.shape,
            ))
        return collect(terms)

    @staticmethod
    def derivative_terms(n: int, free: bool = False) -> List[ResolventProduct]:
        """
        Expansion of the n-th derivative of R(z) (or R_0(z)) into products

        Args:
            n: Derivative order, 0 <= n <= 6
            free: Expand R_0 instead of R

        Returns:
            List[ResolventProduct]: Products with integer multiplicities, each with m = n + 2

        Raises:
            PreconditionError: If n is outside [0, 6]
        """
        if not 0 <= n <= MAX_DERIVATIVE_ORDER:
            raise PreconditionError(
                f"derivative order must lie in [0, {MAX_DERIVATIVE_ORDER}]", context={"n": n}
            )
        slot = SlotKind.FREE_Z if free else SlotKind.PERTURBED_Z
        terms = [ResolventProduct((slot,))]
        for _ in range(n):
            terms = collect(t for product in terms for t in ProductCalculus.differentiate(product))
        return terms

    @staticmethod
    def difference_terms(n: int) -> List[ResolventProduct]:
        """
        R^(n) - R_0^(n) as theta-bridged products

        From R - R_0 = R theta_2 R_0 and the Leibniz rule:
        sum over n1 + n2 + n3 = n of n!/(n1! n2! n3!) R^(n1) theta_{2-n2} R_0^(n3), n2 <= 2.
        Every product satisfies m = n + 2.
        """
        terms: List[ResolventProduct] = []
        for n2 in range(0, min(n, 2) + 1):
            bridge = FactorKind.theta(2 - n2)
            for n1 in range(0, n - n2 + 1):
                n3 = n - n1 - n2
                weight = factorial(n) // (factorial(n1) * factorial(n2) * factorial(n3))
                for left in ProductCalculus.derivative_terms(n1):
                    for right in ProductCalculus.derivative_terms(n3, free=True):
                        terms.append(concatenate(left, bridge, right, weight))
        return collect(terms)

    @staticmethod
    def expand_ir(product: ResolventProduct, depth: int) -> List[ResolventProduct]:
        """
        Rewrite a chain R(z) gamma_j1 R(z) ... R(z) with more R(ir) factors

        Repeated use of R(z) = R(ir) + R(ir) gamma_2(z) R(z). The result is a sum of
        pure R(ir) chains of length k..depth and split products
        R(ir) ... R(ir) gamma_l R(z) ... R(z) with exactly depth + 1 resolvents at ir.

        Args:
            product: Chain of perturbed-at-z resolvents with factors gamma_0/gamma_1
            depth: Number of expansion steps N >= 0

        Returns:
            List[ResolventProduct]: Terms whose sum equals the product

        Raises:
            PreconditionError: If the chain has free slots, theta bridges or gamma_2
        """
        if depth < 0:
            raise PreconditionError("expansion depth must be >= 0", context={"N": depth})
        if any(s != SlotKind.PERTURBED_Z for s in product.slots):
            raise PreconditionError("expansion needs a chain of perturbed resolvents at z")
        if any(f.is_free or f.is_theta or f.index > 1 for f in product.factors):
            raise PreconditionError("expansion needs factors gamma_0 or gamma_1 only",
                                    context={"factors": [f.value for f in product.factors]})

        mult = product.multiplicity
        indices = tuple(f.index for f in product.factors)
        if not indices:
            terms = [_gamma_product((), multiplicity=mult), _gamma_product((), 2, (), mult)]
        else:
            terms = [_gamma_product((), indices[0], indices[1:], mult), _gamma_product((), 2, indices, mult)]

        for _ in range(depth):
            expanded = []
            for term in terms:
                ir, boundary, tail = _split(term)
                if boundary is None:
                    expanded.append(term)
                    continue
                head = ir + (boundary,)
                if not tail:
                    expanded.append(_gamma_product(head, multiplicity=term.multiplicity))
                    expanded.append(_gamma_product(head, 2, (), term.multiplicity))
                else:
                    expanded.append(_gamma_product(head, tail[0], tail[1:], term.multiplicity))
                    expanded.append(_gamma_product(head, 2, tail, term.multiplicity))
            terms = expanded
        return collect(terms)

    @staticmethod
    def exponent_identity(term: ResolventProduct) -> int:
        """m of an expansion term computed from its split: m(kappa, l) or m(N, j1) + m(k2, j2) - l"""
        ir, boundary, tail = _split(term)
        if boundary is None:
            return chain_m(ir)
        return chain_m(ir) + chain_m(tail) - boundary

    @staticmethod
    def exponent_audit(original: ResolventProduct, terms: List[ResolventProduct]) -> bool:
        """Every term satisfies its m-identity and the stored m (integer arithmetic)"""
        for term in terms:
            if ProductCalculus.exponent_identity(term) != original.m or term.m != original.m:
                logger.warning("exponent audit failed for %r (expected m=%d)", term, original.m)
                return False
        return True
