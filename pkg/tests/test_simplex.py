from itertools import product
from math import comb

import pytest
from gmpy2 import mpq
from hypothesis import given, settings

from conftest import polynomials
from wfspectral.operator import eigenpolynomial
from wfspectral.polynomial import ONE, SparsePolynomial, multi_indices_upto
from wfspectral.simplex import (
    Face,
    FaceMeasure,
    Stratification,
    coordinate,
    inner_product,
    lift_to_ambient,
    lifted_weight,
    monomial_integral,
    restrict_to_face,
    weight_polynomial,
)


def iterated_integral(beta, beta0, k):
    """Integrate ``y^beta (1 - sum y)^beta0`` one variable at a time, innermost last."""
    P = SparsePolynomial
    s = P.one(k)
    for r in range(k):
        s = s - P.variable(r, k)
    f = P.monomial(beta) * s**beta0
    # y_{level} runs from 0 to 1 - (earlier variables)
    for level in range(k - 1, -1, -1):
        upper = P.one(level + 1)
        for r in range(level):
            upper = upper - P.variable(r, level + 1)
        out = P.zero(level + 1)
        for alpha, c in f.terms.items():
            e = alpha[level]
            head = P.monomial(alpha[:level] + (0,), c * mpq(1, e + 1))
            out = out + head * upper ** (e + 1)
        f = P({a[:level]: c for a, c in out.terms.items()}, level) if level else out
        if level == 0:
            return f.coefficient((0,)) if f.arity == 1 else f.coefficient(())
    return None


def test_monomial_integral_examples():
    assert monomial_integral((0,), 0, 1) == 1
    assert monomial_integral((2,), 0, 1) == mpq(1, 3)
    assert monomial_integral((1, 1), 0, 2) == mpq(1, 24)


@pytest.mark.parametrize("k", [1, 2, 3])
def test_monomial_integral_matches_iterated_oracle(k):
    for total in range(7):
        for beta in multi_indices_upto(k, total):
            beta0 = total - sum(beta)
            assert monomial_integral(beta, beta0, k) == iterated_integral(beta, beta0, k)


def test_inner_product_examples():
    face = Face((0, 1))
    one = SparsePolynomial.one(1)
    x = SparsePolynomial.variable(0, 1)
    assert inner_product(one, one, face) == 1
    assert inner_product(one, x * (one - x), face) == mpq(1, 6)
    X1 = eigenpolynomial(1, 1, (1,)).poly
    assert inner_product(X1, weight_polynomial(face) * X1, face) == mpq(1, 120)
    with pytest.raises(ValueError):
        inner_product(SparsePolynomial.one(2), one, face)


def test_stratification_counts():
    for n in range(1, 5):
        s = Stratification(n + 1)
        for k in range(n + 1):
            assert len(s.faces(k)) == comb(n + 1, k + 1) == s.count(k)
        assert s.interior.alleles == tuple(range(n + 1))
        assert len(s.vertices()) == n + 1
        assert sum(len(s.faces(k)) for k in range(n + 1)) == len(s.faces())


def test_face_parsing_and_validation():
    f = Face.parse("[0,2]")
    assert f.dim == 1 and f.dependent == 0 and f.free == (2,)
    assert str(f) == "[0,2]"
    with pytest.raises(ValueError):
        Face((2, 1))
    with pytest.raises(ValueError):
        Face(())


def test_weight_examples():
    x = SparsePolynomial.variable(0, 1)
    one = SparsePolynomial.one(1)
    assert weight_polynomial(Face((0, 1))) == x * (one - x)
    y1, y2 = SparsePolynomial.variable(0, 2), SparsePolynomial.variable(1, 2)
    assert weight_polynomial(Face((0, 1, 2))) == y1 * y2 * (SparsePolynomial.one(2) - y1 - y2)
    with pytest.raises(ValueError):
        weight_polynomial(Face((1,)))


def test_weight_vanishes_on_proper_subfaces():
    n = 3
    amb = Stratification(n + 1)
    for face in amb.faces():
        if face.dim < 1:
            continue
        lw = lifted_weight(face, amb)
        for sub in amb.faces():
            if sub.dim < face.dim:
                assert restrict_to_face(lw, sub, n).is_zero()


def test_weight_positive_inside():
    for k in (1, 2, 3):
        face = Face(tuple(range(k + 1)))
        w = weight_polynomial(face)
        for y in product([mpq(1, 7), mpq(2, 9), mpq(1, 5)], repeat=k):
            assert w.evaluate(list(y)) > 0


def test_lift_examples():
    amb = Stratification(3)
    one = SparsePolynomial.one(1)
    assert lift_to_ambient(one, Face((0, 1)), amb) == SparsePolynomial.one(2)
    y = SparsePolynomial.variable(0, 1)
    assert lift_to_ambient(y, Face((0, 2)), amb) == SparsePolynomial.variable(1, 2)
    # dependent coordinate of [0,1] written with the ambient chart, restricted back
    dep = coordinate(Face((0, 1)), 0)
    assert dep == one - y
    lifted = lift_to_ambient(dep, Face((0, 1)), amb)
    assert restrict_to_face(lifted, Face((0, 1)), 2) == one - y


@settings(max_examples=30, deadline=None)
@given(polynomials(1), polynomials(2), polynomials(3))
def test_restrict_after_lift_is_identity(f1, f2, f3):
    for n in (1, 2, 3):
        amb = Stratification(n + 1)
        for face in amb.faces():
            f = {1: f1, 2: f2, 3: f3}.get(face.dim)
            if f is None:
                continue
            assert restrict_to_face(lift_to_ambient(f, face, amb), face, n) == f


def test_face_measure():
    m = FaceMeasure().scaled(Face((0, 1)), 2)
    assert m(Face((0, 1))) == 2 and m(Face((1, 2))) == ONE
    assert FaceMeasure.from_json(m.to_json()) == m
    with pytest.raises(ValueError):
        FaceMeasure({Face((0, 1)): 0})
