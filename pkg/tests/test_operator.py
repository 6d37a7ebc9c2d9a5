import random
from math import comb

import pytest
from gmpy2 import mpq

from wfspectral.operator import (
    EigenConstructionError,
    apply_backward,
    apply_forward,
    boundary_flux_residual,
    eigen_degree,
    eigenbasis,
    eigenpolynomial,
    eigenpolynomial_by_recursion,
    eigenspace_dimension,
    eigenvalue,
    gram_block,
    gram_entry,
    solve_gram,
)
from wfspectral.polynomial import Q, SparsePolynomial, multi_indices, multi_indices_upto
from wfspectral.simplex import Face, inner_product, weight_polynomial

x = SparsePolynomial.variable(0, 1)
one1 = SparsePolynomial.one(1)


def simplex(k):
    return Face(tuple(range(k + 1)))


def test_eigenvalue_examples():
    assert eigenvalue(1, 0) == 1
    assert eigenvalue(2, 0) == 3
    assert eigenvalue(1, 1) == 3
    assert eigen_degree(1, 3) == 1 and eigen_degree(2, 4) is None


def test_eigenpolynomial_examples():
    e0 = eigenpolynomial(1, 0, (0,))
    assert e0.poly == one1 and e0.eigenvalue == 1
    e1 = eigenpolynomial(1, 1, (1,))
    assert e1.poly == x - SparsePolynomial.constant(mpq(1, 2), 1) and e1.eigenvalue == 3
    e2 = eigenpolynomial(1, 2, (2,))
    assert e2.poly == x * x - x + SparsePolynomial.constant(mpq(1, 5), 1) and e2.eigenvalue == 6
    assert str(e1) == "x - 1/2, lambda = 3"
    with pytest.raises(ValueError):
        eigenpolynomial(2, 2, (1, 0))


def test_apply_forward_examples():
    X1 = eigenpolynomial(1, 1, (1,)).poly
    assert apply_forward(1, X1) == X1.scale(-3)
    assert apply_forward(1, one1) == -one1
    X2 = x * x - x + SparsePolynomial.constant(mpq(1, 5), 1)
    assert apply_forward(1, X2) == X2.scale(-6)


def test_apply_backward_examples():
    for i in range(2):
        assert apply_backward(2, SparsePolynomial.variable(i, 2)).is_zero()
    assert apply_backward(2, SparsePolynomial.one(2)).is_zero()
    y1, y2 = SparsePolynomial.variable(0, 2), SparsePolynomial.variable(1, 2)
    g = y1 * y2 * (y1 - SparsePolynomial.constant(mpq(1, 2), 2))
    assert apply_backward(2, g) == g.scale(-3)


@pytest.mark.parametrize("k", [1, 2, 3])
def test_eigen_identities(k):
    w = weight_polynomial(simplex(k))
    for m in range(7):
        lam = eigenvalue(k, m)
        for e in eigenbasis(k, m):
            X = e.poly
            assert X.coefficient(e.alpha) == 1 and X.degree == m
            for beta in X.terms:
                assert all(b <= a for b, a in zip(beta, e.alpha))
            assert apply_forward(k, X) == X.scale(-lam)
            assert apply_backward(k, w * X) == (w * X).scale(-lam)


@pytest.mark.parametrize("k", [1, 2, 3])
def test_recursion_cross_check(k):
    for m in range(5):
        for alpha in multi_indices(k, m):
            assert eigenpolynomial_by_recursion(k, alpha) == eigenpolynomial(k, m, alpha).poly


def random_poly(rng, k, degree):
    terms = {a: Q(rng.randint(-5, 5), rng.randint(1, 6)) for a in multi_indices_upto(k, degree)
             if rng.random() < 0.5}
    return SparsePolynomial(terms, k)


@pytest.mark.parametrize("k", [1, 2, 3])
def test_weighted_adjointness(k):
    rng = random.Random(20 + k)
    face = simplex(k)
    w = weight_polynomial(face)
    for _ in range(50):
        f = random_poly(rng, k, 4)
        g = random_poly(rng, k, 4)
        lhs = inner_product(apply_forward(k, f), w * g, face)
        rhs = inner_product(f, apply_backward(k, w * g), face)
        assert lhs == rhs


@pytest.mark.parametrize("k", [1, 2, 3])
def test_cross_degree_orthogonality(k):
    for m in range(5):
        for j in range(m):
            for a in multi_indices(k, m):
                for b in multi_indices(k, j):
                    assert gram_entry(k, a, b) == 0


def test_gram_examples():
    assert gram_block(1, 0).matrix == ((mpq(1, 6),),)
    assert gram_block(1, 1).matrix == ((mpq(1, 120),),)
    assert gram_entry(1, (0,), (1,)) == 0
    assert gram_block(1, 0, Face((0, 1)), measure=2).matrix == ((mpq(1, 3),),)
    with pytest.raises(ValueError):
        gram_block(2, 1, Face((0, 1)))


@pytest.mark.parametrize("k", [1, 2, 3])
def test_gram_blocks_match_direct_integration(k):
    for m in range(4):
        block = gram_block(k, m)
        assert block.size == eigenspace_dimension(k, m)
        for i, a in enumerate(block.indices):
            assert block.matrix[i][i] > 0
            for j, b in enumerate(block.indices):
                assert block.matrix[i][j] == gram_entry(k, a, b) == block.matrix[j][i]


def test_solve_gram_inverts():
    block = gram_block(2, 3)
    rhs = [Q(i + 1, 3) for i in range(block.size)]
    c = solve_gram(2, 3, rhs)
    back = [sum(block.matrix[i][j] * c[j] for j in range(block.size)) for i in range(block.size)]
    assert back == rhs
    assert solve_gram(2, 3, rhs, measure=2) == [v / 2 for v in c]


def test_eigenspace_dimension():
    assert all(eigenspace_dimension(1, m) == 1 for m in range(6))
    assert eigenspace_dimension(2, 1) == 2
    assert eigenspace_dimension(3, 2) == 6
    for k in (1, 2, 3):
        for m in range(7):
            assert eigenspace_dimension(k, m) == comb(k + m - 1, k - 1) == len(eigenbasis(k, m))


def test_spectrum_nesting():
    for n in range(1, 6):
        for k in range(1, n):
            for m in range(15):
                assert eigenvalue(n, m) == eigenvalue(k, m + n - k)


@pytest.mark.parametrize("k", [1, 2, 3])
def test_eigenbasis_spans_monomials(k):
    # change of basis to monomials is unitriangular in grlex order
    M = 5
    basis = [e for m in range(M + 1) for e in eigenbasis(k, m)]
    index = {e.alpha: i for i, e in enumerate(basis)}
    assert sorted(index) == sorted(multi_indices_upto(k, M))
    for e in basis:
        for beta, c in e.poly.terms.items():
            if beta == e.alpha:
                assert c == 1
            else:
                assert sum(beta) < sum(e.alpha)


def test_boundary_flux_vanishes():
    assert boundary_flux_residual(2, 0, 1).is_zero()
    assert boundary_flux_residual(1, 0, 0).is_zero()
    for k in (1, 2, 3):
        for i in range(k):
            assert boundary_flux_residual(k, "diagonal", i).is_zero()
            for s in range(k):
                assert boundary_flux_residual(k, s, i).is_zero()


def test_error_types():
    assert issubclass(EigenConstructionError, RuntimeError)
    with pytest.raises(ValueError):
        eigenpolynomial(0, 0, ())
