"""Forward and backward Wright-Fisher operators on a k-dimensional face chart.

The diffusion matrix is ``a_ij = y^i (delta_ij - y^j)``.  The forward
operator is ``L f = 1/2 sum_ij d_i d_j (a_ij f)`` and the backward operator
``L* g = 1/2 sum_ij a_ij d_i d_j g``.  The eigenpolynomials of ``L`` are
``X = y^alpha + lower terms`` with eigenvalue ``-(m+k)(m+k+1)/2``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import comb
from typing import Union

from gmpy2 import mpq

from wfspectral.polynomial import ONE, ZERO, MultiIndex, Q, SparsePolynomial, multi_indices
from wfspectral.simplex import Face, _monomial_integral, inner_product, weight_polynomial


class EigenConstructionError(RuntimeError):
    """The triangular eigen-solve was inconsistent; indicates a bug."""


class SingularGramError(RuntimeError):
    pass


@lru_cache(maxsize=None)
def _diffusion(k: int) -> tuple[tuple[SparsePolynomial, ...], ...]:
    y = [SparsePolynomial.variable(i, k) for i in range(k)]
    rows = []
    for i in range(k):
        row = []
        for j in range(k):
            a = y[i] * (1 - y[j]) if i == j else -(y[i] * y[j])
            row.append(a)
        rows.append(tuple(row))
    return tuple(rows)


def diffusion_coefficient(k: int, i: int, j: int) -> SparsePolynomial:
    return _diffusion(k)[i][j]


def apply_forward(k: int, f: SparsePolynomial) -> SparsePolynomial:
    """``1/2 sum_ij d^2 (a_ij f) / dy^i dy^j``."""
    if f.arity != k:
        raise ValueError(f"expected a polynomial in {k} variables")
    a = _diffusion(k)
    acc = SparsePolynomial.zero(k)
    for i in range(k):
        acc = acc + (a[i][i] * f).partial_derivative(i, 2)
        for j in range(i + 1, k):
            acc = acc + (a[i][j] * f).partial_derivative(i).partial_derivative(j).scale(2)
    return acc.scale(mpq(1, 2))


def apply_backward(k: int, g: SparsePolynomial) -> SparsePolynomial:
    """``1/2 sum_ij a_ij d^2 g / dy^i dy^j``."""
    if g.arity != k:
        raise ValueError(f"expected a polynomial in {k} variables")
    a = _diffusion(k)
    acc = SparsePolynomial.zero(k)
    for i in range(k):
        acc = acc + a[i][i] * g.partial_derivative(i, 2)
        for j in range(i + 1, k):
            acc = acc + (a[i][j] * g.partial_derivative(i).partial_derivative(j)).scale(2)
    return acc.scale(mpq(1, 2))


def eigenvalue(k: int, m: int) -> mpq:
    if k < 1 or m < 0:
        raise ValueError("need k >= 1 and m >= 0")
    return mpq((m + k) * (m + k + 1), 2)


def eigen_degree(k: int, rate) -> int | None:
    """Inverse of :func:`eigenvalue`: the degree ``m`` with that rate, or ``None``."""
    rate = Q(rate)
    if rate.denominator != 1:
        return None
    # (m+k)(m+k+1) = 2 rate
    s = int(rate) * 2
    r = int((s) ** 0.5)
    for cand in (r - 1, r, r + 1):
        if cand >= 0 and cand * (cand + 1) == s:
            m = cand - k
            return m if m >= 0 else None
    return None


def eigenspace_dimension(k: int, m: int) -> int:
    if k < 1 or m < 0:
        raise ValueError("need k >= 1 and m >= 0")
    return comb(k + m - 1, k - 1)


@dataclass(frozen=True)
class EigenPolynomial:
    k: int
    m: int
    alpha: MultiIndex
    poly: SparsePolynomial
    eigenvalue: mpq

    def __str__(self) -> str:
        return f"{self.poly.to_text()}, lambda = {self.eigenvalue}"


@lru_cache(maxsize=None)
def _forward_monomial(k: int, beta: MultiIndex) -> SparsePolynomial:
    return apply_forward(k, SparsePolynomial.monomial(beta))


def _triangular_solve(k: int, alpha: MultiIndex) -> SparsePolynomial:
    m = sum(alpha)
    lam = eigenvalue(k, m)
    coeffs: dict[MultiIndex, mpq] = {alpha: ONE}
    # residual of (L + lam) applied to the part of X fixed so far
    resid: dict[MultiIndex, mpq] = {}

    def absorb(beta: MultiIndex, c: mpq) -> None:
        image = _forward_monomial(k, beta)
        for g, v in image.terms.items():
            resid[g] = resid.get(g, ZERO) + c * v
        resid[beta] = resid.get(beta, ZERO) + c * lam

    absorb(alpha, ONE)
    for d in range(m, -1, -1):
        level = [b for b in resid if sum(b) == d and resid[b]]
        if d == m:
            if level:
                raise EigenConstructionError(f"top-degree residual for alpha={alpha}: {level}")
            continue
        for beta in sorted(level, reverse=True):
            diag = _forward_monomial(k, beta).coefficient(beta) + lam
            if not diag:
                raise EigenConstructionError(f"zero pivot at beta={beta}")
            c = -resid[beta] / diag
            coeffs[beta] = c
            absorb(beta, c)
            if resid.get(beta):
                raise EigenConstructionError(f"pivot did not clear beta={beta}")
    if any(resid.values()):
        raise EigenConstructionError(f"nonzero final residual for alpha={alpha}")
    return SparsePolynomial(coeffs, k)


def eigenpolynomial_by_recursion(k: int, alpha: MultiIndex) -> SparsePolynomial:
    """Closed recursion for the lower coefficients, denominator ``(m-|b|)(m+|b|+2k+1)``."""
    alpha = tuple(alpha)
    m = sum(alpha)
    coeffs: dict[MultiIndex, mpq] = {alpha: ONE}
    for d in range(m - 1, -1, -1):
        for beta in multi_indices(k, d):
            if any(b > a for a, b in zip(alpha, beta)):
                continue
            num = ZERO
            for i in range(k):
                up = beta[:i] + (beta[i] + 1,) + beta[i + 1:]
                c = coeffs.get(up)
                if c:
                    num += (beta[i] + 2) * (beta[i] + 1) * c
            if num:
                coeffs[beta] = -num / ((m - d) * (m + d + 2 * k + 1))
    return SparsePolynomial(coeffs, k)


@lru_cache(maxsize=None)
def _eigenpolynomial(k: int, alpha: MultiIndex) -> EigenPolynomial:
    m = sum(alpha)
    if m == 0:
        poly = SparsePolynomial.one(k)
    else:
        poly = _triangular_solve(k, alpha)
        if poly != eigenpolynomial_by_recursion(k, alpha):
            raise EigenConstructionError(f"recursion cross-check failed for alpha={alpha}")
    return EigenPolynomial(k, m, alpha, poly, eigenvalue(k, m))


def eigenpolynomial(k: int, m: int, alpha) -> EigenPolynomial:
    """The eigenpolynomial ``X^{(k)}_{m,alpha}``, monic in ``y^alpha``."""
    alpha = tuple(int(a) for a in alpha)
    if k < 1:
        raise ValueError("k must be at least 1")
    if len(alpha) != k:
        raise ValueError(f"alpha must have {k} entries")
    if sum(alpha) != m or any(a < 0 for a in alpha):
        raise ValueError(f"|alpha| must equal m={m}")
    return _eigenpolynomial(k, alpha)


def eigenbasis(k: int, m: int) -> list[EigenPolynomial]:
    return [_eigenpolynomial(k, a) for a in multi_indices(k, m)]


@dataclass(frozen=True)
class GramBlock:
    """Weighted Gram matrix ``(X_{m,a}, w X_{m,b})`` of one eigen-degree."""

    k: int
    m: int
    indices: tuple[MultiIndex, ...]
    matrix: tuple[tuple[mpq, ...], ...]

    @property
    def size(self) -> int:
        return len(self.indices)

    def solve(self, rhs) -> list[mpq]:
        return _gram_solver(self.k, self.m)(rhs)


@lru_cache(maxsize=None)
def _gram_unit(k: int, m: int) -> GramBlock:
    # (X_a, w X_b) = (X_a, w y^b): the lower part of X_b is w-orthogonal to X_a
    indices = tuple(multi_indices(k, m))
    rows = []
    for a in indices:
        x = _eigenpolynomial(k, a).poly
        row = []
        for b in indices:
            acc = ZERO
            for g, c in x.terms.items():
                shifted = tuple(gi + bi + 1 for gi, bi in zip(g, b))
                acc += c * _monomial_integral(shifted, 1, k)
            row.append(acc)
        rows.append(tuple(row))
    for i in range(len(rows)):
        for j in range(i):
            if rows[i][j] != rows[j][i]:
                raise EigenConstructionError(f"Gram block ({k},{m}) is not symmetric")
    return GramBlock(k, m, indices, tuple(rows))


def gram_block(k: int, m: int, face: Face | None = None, measure=1) -> GramBlock:
    """Gram block of degree ``m`` on a ``k``-face, scaled by the face measure constant."""
    if face is not None and face.dim != k:
        raise ValueError(f"face {face} has dimension {face.dim}, not {k}")
    unit = _gram_unit(k, m)
    c = Q(measure)
    if c == 1:
        return unit
    return GramBlock(k, m, unit.indices, tuple(tuple(v * c for v in row) for row in unit.matrix))


def gram_entry(k: int, alpha: MultiIndex, beta: MultiIndex, measure=1) -> mpq:
    """``(X_alpha, w X_beta)`` by direct integration of the full product."""
    face = Face(tuple(range(k + 1)))
    xa = _eigenpolynomial(k, tuple(alpha)).poly
    xb = _eigenpolynomial(k, tuple(beta)).poly
    return inner_product(xa, weight_polynomial(face) * xb, face, measure)


def solve_rational(matrix, rhs) -> list[mpq]:
    """Exact Gaussian elimination with partial (nonzero) pivoting."""
    n = len(matrix)
    aug = [[Q(v) for v in row] + [Q(b)] for row, b in zip(matrix, rhs)]
    for col in range(n):
        piv = next((r for r in range(col, n) if aug[r][col]), None)
        if piv is None:
            raise SingularGramError("singular matrix")
        aug[col], aug[piv] = aug[piv], aug[col]
        p = aug[col][col]
        prow = aug[col]
        for r in range(col + 1, n):
            f = aug[r][col]
            if f:
                f = f / p
                row = aug[r]
                for c in range(col, n + 1):
                    row[c] -= f * prow[c]
    x = [ZERO] * n
    for r in range(n - 1, -1, -1):
        s = aug[r][n]
        for c in range(r + 1, n):
            s -= aug[r][c] * x[c]
        x[r] = s / aug[r][r]
    return x


@lru_cache(maxsize=None)
def _gram_inverse(k: int, m: int) -> tuple[tuple[mpq, ...], ...]:
    block = _gram_unit(k, m)
    n = block.size
    cols = []
    for j in range(n):
        e = [ONE if i == j else ZERO for i in range(n)]
        cols.append(solve_rational(block.matrix, e))
    return tuple(tuple(cols[j][i] for j in range(n)) for i in range(n))


def _gram_solver(k: int, m: int):
    size = _gram_unit(k, m).size
    if size > 24:
        block = _gram_unit(k, m)
        return lambda rhs: solve_rational(block.matrix, rhs)
    inv = _gram_inverse(k, m)

    def solve(rhs):
        rhs = [Q(b) for b in rhs]
        return [sum((r * b for r, b in zip(row, rhs) if b), ZERO) for row in inv]

    return solve


def solve_gram(k: int, m: int, rhs, measure=1) -> list[mpq]:
    """Solve ``G c = rhs`` for the degree-``m`` Gram block of a ``k``-face."""
    c = Q(measure)
    x = _gram_solver(k, m)(rhs)
    return x if c == 1 else [v / c for v in x]


Facet = Union[int, str]


def boundary_flux_residual(k: int, facet: Facet, i: int) -> SparsePolynomial:
    """``sum_j a_ij nu^j`` restricted to a boundary facet of the k-chart.

    ``facet`` is a free-coordinate index ``s`` (the facet ``y^s = 0`` with
    normal ``-e_s``) or ``"diagonal"`` (the facet ``sum y = 1``, normal taken
    as ``e_1 + ... + e_k`` without the ``1/sqrt(k)`` scale).  The result is
    identically zero.
    """
    a = _diffusion(k)
    if not 0 <= i < k:
        raise IndexError("component index out of range")
    y = [SparsePolynomial.variable(r, k) for r in range(k)]
    if facet == "diagonal":
        flux = SparsePolynomial.zero(k)
        for j in range(k):
            flux = flux + a[i][j]
        rest = SparsePolynomial.one(k)
        for r in range(k - 1):
            rest = rest - y[r]
        images = y[:-1] + [rest]
        return flux.substitute(images, target_arity=k)
    s = int(facet)
    if not 0 <= s < k:
        raise IndexError("facet index out of range")
    flux = -a[i][s]
    images = [SparsePolynomial.zero(k) if r == s else y[r] for r in range(k)]
    return flux.substitute(images, target_arity=k)
