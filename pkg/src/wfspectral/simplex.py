"""The stratified simplex: faces, charts, and exact integration.

Alleles are labelled ``0..n``.  The ambient chart uses the free coordinates
``x^1..x^n`` (polynomial variable ``a - 1`` is allele ``a``) with
``x^0 = 1 - sum(x)``.  A face with alleles ``i_0 < i_1 < ... < i_k`` is
charted by its free coordinates ``x^{i_1}..x^{i_k}`` and the dependent
coordinate ``x^{i_0} = 1 - sum``; integration is Lebesgue measure in that
chart, times a per-face normalization constant (default 1).
"""

from __future__ import annotations

import json
from collections.abc import Iterator, Mapping, Sequence
from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations
from math import comb, factorial

from gmpy2 import mpq

from wfspectral.polynomial import ONE, ZERO, MultiIndex, Q, Rational, SparsePolynomial


@dataclass(frozen=True, order=True)
class Face:
    """A stratum of the simplex, identified by the alleles present on it."""

    alleles: tuple[int, ...]

    def __post_init__(self):
        alleles = tuple(int(a) for a in self.alleles)
        if not alleles:
            raise ValueError("a face needs at least one allele")
        if any(b <= a for a, b in zip(alleles, alleles[1:])):
            raise ValueError(f"face alleles must be strictly increasing: {alleles}")
        if alleles[0] < 0:
            raise ValueError("allele indices are non-negative")
        object.__setattr__(self, "alleles", alleles)

    @classmethod
    def of(cls, *alleles: int) -> "Face":
        return cls(tuple(sorted(alleles)))

    @classmethod
    def parse(cls, text: str) -> "Face":
        return cls(tuple(sorted(json.loads(text))))

    @property
    def dim(self) -> int:
        return len(self.alleles) - 1

    @property
    def dependent(self) -> int:
        return self.alleles[0]

    @property
    def free(self) -> tuple[int, ...]:
        return self.alleles[1:]

    def contains(self, other: "Face") -> bool:
        return set(other.alleles) <= set(self.alleles)

    def __contains__(self, allele: int) -> bool:
        return allele in self.alleles

    def __str__(self) -> str:
        return "[" + ",".join(str(a) for a in self.alleles) + "]"


class Stratification:
    """All faces of the simplex on ``allele_count`` alleles, grouped by dimension."""

    def __init__(self, allele_count: int):
        if allele_count < 2:
            raise ValueError("at least two alleles are required")
        self.allele_count = allele_count
        self.n = allele_count - 1
        self._by_dim = {
            k: [Face(c) for c in combinations(range(allele_count), k + 1)]
            for k in range(allele_count)
        }

    def faces(self, dim: int | None = None) -> list[Face]:
        if dim is None:
            return [f for k in range(self.allele_count) for f in self._by_dim[k]]
        return list(self._by_dim.get(dim, []))

    @property
    def interior(self) -> Face:
        return self._by_dim[self.n][0]

    def vertices(self) -> list[Face]:
        return self.faces(0)

    def superfaces(self, face: Face) -> list[Face]:
        """Faces strictly containing ``face``, largest first."""
        return [g for k in range(self.n, face.dim, -1) for g in self._by_dim[k] if g.contains(face)]

    def __contains__(self, face: Face) -> bool:
        return face.alleles[-1] < self.allele_count

    def __iter__(self) -> Iterator[Face]:
        return iter(self.faces())

    def count(self, dim: int) -> int:
        return comb(self.allele_count, dim + 1)


@lru_cache(maxsize=None)
def _monomial_integral(beta: MultiIndex, beta0: int, k: int) -> mpq:
    num = factorial(beta0)
    for b in beta:
        num *= factorial(b)
    return mpq(num, factorial(sum(beta) + beta0 + k))


def monomial_integral(beta: Sequence[int], beta0: int, k: int) -> mpq:
    """Integral of ``y^beta (1 - sum y)^beta0`` over the standard open k-simplex."""
    if k < 1:
        raise ValueError("k must be at least 1")
    beta = tuple(int(b) for b in beta)
    if len(beta) != k:
        raise ValueError(f"multi-index of length {len(beta)} for a {k}-simplex")
    return _monomial_integral(beta, beta0, k)


def integrate(f: SparsePolynomial, measure: Rational = 1) -> mpq:
    """Integral of ``f`` over the standard simplex of dimension ``f.arity``."""
    k = f.arity
    total = ZERO
    for alpha, c in f.terms.items():
        total += c * _monomial_integral(alpha, 0, k)
    return total * Q(measure)


def inner_product(
    f: SparsePolynomial, g: SparsePolynomial, face: Face, measure: Rational = 1
) -> mpq:
    """Exact ``(f, g)`` on ``face``, both given in the face chart."""
    if f.arity != face.dim or g.arity != face.dim:
        raise ValueError(
            f"polynomials of arity {f.arity}, {g.arity} do not live on a {face.dim}-face"
        )
    return integrate(f * g, measure)


def coordinate(face: Face, allele: int) -> SparsePolynomial:
    """The allele frequency ``x^allele`` expressed in the chart of ``face``."""
    k = face.dim
    if allele == face.dependent:
        out = SparsePolynomial.one(k)
        for r in range(k):
            out = out - SparsePolynomial.variable(r, k)
        return out
    if allele in face.free:
        return SparsePolynomial.variable(face.free.index(allele), k)
    return SparsePolynomial.zero(k)


def ambient_coordinate(allele: int, n: int) -> SparsePolynomial:
    return coordinate(Face(tuple(range(n + 1))), allele)


def weight_polynomial(face: Face) -> SparsePolynomial:
    """Product of all ``k + 1`` allele frequencies of the face, in its chart."""
    if face.dim < 1:
        raise ValueError("the weight degenerates on a vertex")
    out = SparsePolynomial.one(face.dim)
    for a in face.alleles:
        out = out * coordinate(face, a)
    return out


def weight_in_chart(face: Face, chart: Face) -> SparsePolynomial:
    """``prod_{i in face} x^i`` written in the chart of a (super)face ``chart``."""
    out = SparsePolynomial.one(chart.dim)
    for a in face.alleles:
        out = out * coordinate(chart, a)
    return out


def restrict_to_face(f: SparsePolynomial, face: Face, n: int) -> SparsePolynomial:
    """Restrict an ambient polynomial (arity ``n``) to the chart of ``face``."""
    if f.arity != n:
        raise ValueError(f"ambient polynomial must have arity {n}")
    images = [coordinate(face, a) for a in range(1, n + 1)]
    return f.substitute(images, target_arity=face.dim)


def reindex(f: SparsePolynomial, face: Face, chart: Face) -> SparsePolynomial:
    """Rewrite a polynomial in the free coordinates of ``face`` in the chart of ``chart``.

    ``face`` must be a subface of ``chart``; the free coordinates of a subface
    are always free coordinates of the superface, so this is a pure
    relabelling of variables.
    """
    if not chart.contains(face):
        raise ValueError(f"{face} is not a subface of {chart}")
    if f.arity != face.dim:
        raise ValueError("polynomial arity does not match the face")
    slots = [chart.free.index(a) for a in face.free]
    out = {}
    for alpha, c in f.terms.items():
        beta = [0] * chart.dim
        for slot, e in zip(slots, alpha):
            beta[slot] = e
        out[tuple(beta)] = c
    return SparsePolynomial(out, chart.dim)


def lift_to_ambient(f: SparsePolynomial, face: Face, ambient: Stratification) -> SparsePolynomial:
    """Extend a face-chart polynomial to the ambient chart.

    Each face variable ``y^r`` becomes the ambient coordinate of the same
    allele, so ``restrict_to_face(lift_to_ambient(f)) == f``.
    """
    if face not in ambient:
        raise ValueError(f"{face} is not a face of the {ambient.n}-simplex")
    return reindex(f, face, ambient.interior)


def lifted_weight(face: Face, ambient: Stratification) -> SparsePolynomial:
    """``prod_{i in face} x^i`` in ambient coordinates; vanishes off faces containing ``face``."""
    return weight_in_chart(face, ambient.interior)


def chart_point(face: Face, p: Sequence[Rational]) -> list[mpq]:
    """Chart coordinates of a barycentric point (length ``n + 1``)."""
    return [Q(p[a]) for a in face.free]


def ambient_point(p: Sequence[Rational]) -> list[mpq]:
    """Ambient free coordinates ``(p^1..p^n)`` of a barycentric point."""
    return [Q(v) for v in p[1:]]


class FaceMeasure:
    """Per-face normalization constants of the face measures (default 1)."""

    def __init__(self, constants: Mapping[Face, Rational] | None = None):
        self._c = {f: Q(v) for f, v in (constants or {}).items()}
        for f, v in self._c.items():
            if v <= 0:
                raise ValueError(f"measure constant for {f} must be positive")

    def __call__(self, face: Face) -> mpq:
        return self._c.get(face, ONE)

    def items(self):
        return sorted(self._c.items())

    def scaled(self, face: Face, factor: Rational) -> "FaceMeasure":
        c = dict(self._c)
        c[face] = self(face) * Q(factor)
        return FaceMeasure(c)

    def __eq__(self, other) -> bool:
        return isinstance(other, FaceMeasure) and {
            f: v for f, v in self._c.items() if v != 1
        } == {f: v for f, v in other._c.items() if v != 1}

    def to_json(self) -> dict[str, str]:
        return {str(f): str(v) for f, v in self.items() if v != 1}

    @classmethod
    def from_json(cls, data: Mapping[str, str]) -> "FaceMeasure":
        return cls({Face.parse(k): mpq(v) for k, v in data.items()})
