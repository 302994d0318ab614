import pytest

from app.core.exceptions import PreconditionError
from app.models.resolvent import FactorKind, FrequencyPoint, Region, ResolventProduct, SlotKind
from app.services.calculus_service import ProductCalculus, collect

R = SlotKind.PERTURBED_Z
R_IR = SlotKind.PERTURBED_IR
R0 = SlotKind.FREE_Z


def as_set(products):
    return {(p.slots, p.factors, p.multiplicity) for p in products}


def test_product_exponent():
    assert ResolventProduct((R,)).m == 2
    assert ResolventProduct((R, R), (FactorKind.GAMMA1,)).m == 3
    assert ResolventProduct((R, R, R), (FactorKind.GAMMA0, FactorKind.GAMMA1)).m == 5


def test_product_validation():
    with pytest.raises(PreconditionError):
        ResolventProduct((R, R))
    with pytest.raises(PreconditionError):
        ResolventProduct((R0, R), (FactorKind.THETA2,))
    with pytest.raises(PreconditionError):
        ResolventProduct((R,), multiplicity=0)


def test_factor_kinds():
    assert FactorKind.gamma(1, free=True) == FactorKind.GAMMA1_FREE
    assert FactorKind.theta(2).index == 2 and FactorKind.THETA2.is_theta
    assert FactorKind.GAMMA2.index == 2 and not FactorKind.GAMMA2.is_free


def test_low_order_derivatives():
    assert as_set(ProductCalculus.derivative_terms(0)) == {((R,), (), 1)}
    assert as_set(ProductCalculus.derivative_terms(1)) == {((R, R), (FactorKind.GAMMA1,), 1)}
    assert as_set(ProductCalculus.derivative_terms(2)) == {
        ((R, R, R), (FactorKind.GAMMA1, FactorKind.GAMMA1), 2),
        ((R, R), (FactorKind.GAMMA0,), 1),
    }


@pytest.mark.parametrize("n", range(0, 7))
@pytest.mark.parametrize("free", [False, True])
def test_derivative_terms_exponent(n, free):
    terms = ProductCalculus.derivative_terms(n, free=free)
    assert terms
    assert all(term.m == n + 2 for term in terms)
    assert all(slot.is_free == free for term in terms for slot in term.slots)


def test_derivative_order_is_bounded():
    with pytest.raises(PreconditionError):
        ProductCalculus.derivative_terms(7)


def test_differentiate_rejects_non_holomorphic_parts():
    with pytest.raises(PreconditionError):
        ProductCalculus.differentiate(ResolventProduct((R_IR,)))
    with pytest.raises(PreconditionError):
        ProductCalculus.differentiate(ResolventProduct((R, R), (FactorKind.GAMMA2,)))


@pytest.mark.parametrize("n", range(0, 5))
def test_difference_terms(n):
    terms = ProductCalculus.difference_terms(n)
    assert all(term.m == n + 2 for term in terms)
    assert all(term.bridge is not None for term in terms)
    if n == 0:
        assert as_set(terms) == {((R, R0), (FactorKind.THETA2,), 1)}


def test_collect_merges_multiplicities():
    product = ResolventProduct((R, R), (FactorKind.GAMMA1,))
    merged = collect([product, product, product.with_multiplicity(3)])
    assert len(merged) == 1 and merged[0].multiplicity == 5


def test_expand_ir_depth_zero():
    terms = ProductCalculus.expand_ir(ResolventProduct((R,)), 0)
    assert as_set(terms) == {((R_IR,), (), 1), ((R_IR, R), (FactorKind.GAMMA2,), 1)}


@pytest.mark.parametrize("depth", range(0, 4))
@pytest.mark.parametrize("factors", [(), (FactorKind.GAMMA1,), (FactorKind.GAMMA0, FactorKind.GAMMA1)])
def test_expand_ir_exponent_audit(depth, factors):
    chain = ResolventProduct((R,) * (len(factors) + 1), factors)
    terms = ProductCalculus.expand_ir(chain, depth)
    assert ProductCalculus.exponent_audit(chain, terms)
    split = [t for t in terms if not all(s.at_ir for s in t.slots)]
    assert all(sum(1 for s in t.slots if s.at_ir) == depth + 1 for t in split)


def test_expand_ir_rejects_foreign_chains():
    with pytest.raises(PreconditionError):
        ProductCalculus.expand_ir(ResolventProduct((R0,)), 1)
    with pytest.raises(PreconditionError):
        ProductCalculus.expand_ir(ResolventProduct((R, R), (FactorKind.GAMMA2,)), 1)
    with pytest.raises(PreconditionError):
        ProductCalculus.expand_ir(ResolventProduct((R,)), -1)


def test_frequency_regions():
    assert Region.D_I in FrequencyPoint.polar(0.1, 1.5).regions
    assert FrequencyPoint(0.1 + 0.01j).region_tag == Region.D_R_PLUS
    assert FrequencyPoint(-0.1 + 0.01j).region_tag == Region.D_R_MINUS
    assert FrequencyPoint(complex(2.0, 0.5)).regions == (Region.OTHER,)
