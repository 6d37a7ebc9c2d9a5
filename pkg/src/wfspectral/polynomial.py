"""Exact sparse multivariate polynomials over the rationals.

A polynomial is a map from exponent tuples (multi-indices) to nonzero
``gmpy2.mpq`` coefficients.  Values are immutable; every operation returns a
new polynomial.  No floating point is used anywhere in this module.
"""

from __future__ import annotations

from collections.abc import Iterable, Iterator, Mapping, Sequence
from fractions import Fraction
from typing import Union

from gmpy2 import mpq

MultiIndex = tuple[int, ...]
Rational = Union[int, Fraction, "mpq", str]

ZERO = mpq(0)
ONE = mpq(1)


def Q(value: Rational, den: int | None = None) -> mpq:
    """Coerce ``value`` to an exact rational.

    Strings of the form ``"num/den"`` are accepted.  Floats are rejected
    because they would silently import rounding error.
    """
    if isinstance(value, float):
        raise TypeError("floats are not accepted as exact rationals")
    if den is not None:
        return mpq(value, den)
    if isinstance(value, Fraction):
        return mpq(value.numerator, value.denominator)
    return mpq(value)


def degree_of(alpha: Sequence[int]) -> int:
    return sum(alpha)


def grlex_key(alpha: MultiIndex) -> tuple[int, MultiIndex]:
    return (sum(alpha), alpha)


def multi_indices(arity: int, degree: int) -> list[MultiIndex]:
    """All multi-indices of the given arity with total degree exactly ``degree``.

    Returned in descending lexicographic order, which is the row/column order
    used for Gram blocks.
    """
    if arity == 0:
        return [()] if degree == 0 else []
    if arity == 1:
        return [(degree,)]
    out = []
    for first in range(degree, -1, -1):
        for rest in multi_indices(arity - 1, degree - first):
            out.append((first,) + rest)
    return out


def multi_indices_upto(arity: int, degree: int) -> list[MultiIndex]:
    out = []
    for d in range(degree + 1):
        out.extend(multi_indices(arity, d))
    return out


def _add_index(a: MultiIndex, b: MultiIndex) -> MultiIndex:
    return tuple(x + y for x, y in zip(a, b))


class SparsePolynomial:
    """Immutable polynomial in ``arity`` variables with exact coefficients."""

    __slots__ = ("_terms", "_arity", "_hash")

    def __init__(self, terms: Mapping[MultiIndex, Rational] | None = None, arity: int = 1):
        self._arity = arity
        clean: dict[MultiIndex, mpq] = {}
        for alpha, c in (terms or {}).items():
            alpha = tuple(int(e) for e in alpha)
            if len(alpha) != arity:
                raise ValueError(f"multi-index {alpha} does not have arity {arity}")
            if any(e < 0 for e in alpha):
                raise ValueError(f"negative exponent in {alpha}")
            c = Q(c)
            if c:
                clean[alpha] = clean.get(alpha, ZERO) + c
                if not clean[alpha]:
                    del clean[alpha]
        self._terms = clean
        self._hash = None

    @classmethod
    def _raw(cls, terms: dict[MultiIndex, mpq], arity: int) -> "SparsePolynomial":
        # trusted constructor: terms already pruned and typed
        obj = cls.__new__(cls)
        obj._terms = terms
        obj._arity = arity
        obj._hash = None
        return obj

    @classmethod
    def constant(cls, c: Rational, arity: int) -> "SparsePolynomial":
        return cls({(0,) * arity: c}, arity)

    @classmethod
    def zero(cls, arity: int) -> "SparsePolynomial":
        return cls._raw({}, arity)

    @classmethod
    def one(cls, arity: int) -> "SparsePolynomial":
        return cls._raw({(0,) * arity: ONE}, arity)

    @classmethod
    def variable(cls, i: int, arity: int) -> "SparsePolynomial":
        if not 0 <= i < arity:
            raise IndexError(f"variable {i} out of range for arity {arity}")
        alpha = tuple(1 if j == i else 0 for j in range(arity))
        return cls._raw({alpha: ONE}, arity)

    @classmethod
    def monomial(cls, alpha: Sequence[int], coeff: Rational = 1) -> "SparsePolynomial":
        alpha = tuple(alpha)
        return cls({alpha: coeff}, len(alpha))

    @property
    def arity(self) -> int:
        return self._arity

    @property
    def terms(self) -> Mapping[MultiIndex, mpq]:
        return self._terms

    @property
    def degree(self) -> int:
        """Total degree; ``-1`` for the zero polynomial."""
        if not self._terms:
            return -1
        return max(sum(a) for a in self._terms)

    def is_zero(self) -> bool:
        return not self._terms

    def coefficient(self, alpha: Sequence[int]) -> mpq:
        return self._terms.get(tuple(alpha), ZERO)

    def items(self) -> Iterator[tuple[MultiIndex, mpq]]:
        """Terms in descending graded-lex order."""
        for alpha in sorted(self._terms, key=grlex_key, reverse=True):
            yield alpha, self._terms[alpha]

    def __len__(self) -> int:
        return len(self._terms)

    def _check(self, other: "SparsePolynomial") -> None:
        if self._arity != other._arity:
            raise ValueError(f"arity mismatch: {self._arity} vs {other._arity}")

    def _coerce(self, other) -> "SparsePolynomial":
        if isinstance(other, SparsePolynomial):
            self._check(other)
            return other
        return SparsePolynomial.constant(other, self._arity)

    def __add__(self, other) -> "SparsePolynomial":
        other = self._coerce(other)
        out = dict(self._terms)
        for alpha, c in other._terms.items():
            s = out.get(alpha, ZERO) + c
            if s:
                out[alpha] = s
            else:
                out.pop(alpha, None)
        return SparsePolynomial._raw(out, self._arity)

    __radd__ = __add__

    def __neg__(self) -> "SparsePolynomial":
        return SparsePolynomial._raw({a: -c for a, c in self._terms.items()}, self._arity)

    def __sub__(self, other) -> "SparsePolynomial":
        return self + (-self._coerce(other))

    def __rsub__(self, other) -> "SparsePolynomial":
        return self._coerce(other) - self

    def scale(self, c: Rational) -> "SparsePolynomial":
        c = Q(c)
        if not c:
            return SparsePolynomial.zero(self._arity)
        return SparsePolynomial._raw({a: v * c for a, v in self._terms.items()}, self._arity)

    def __mul__(self, other) -> "SparsePolynomial":
        if not isinstance(other, SparsePolynomial):
            return self.scale(other)
        self._check(other)
        out: dict[MultiIndex, mpq] = {}
        for a, ca in self._terms.items():
            for b, cb in other._terms.items():
                g = _add_index(a, b)
                out[g] = out.get(g, ZERO) + ca * cb
        return SparsePolynomial._raw({g: c for g, c in out.items() if c}, self._arity)

    def __rmul__(self, other) -> "SparsePolynomial":
        return self.scale(other)

    def __pow__(self, e: int) -> "SparsePolynomial":
        if e < 0:
            raise ValueError("negative powers are not polynomials")
        result = SparsePolynomial.one(self._arity)
        base = self
        while e:
            if e & 1:
                result = result * base
            base = base * base
            e >>= 1
        return result

    def __eq__(self, other) -> bool:
        if isinstance(other, SparsePolynomial):
            return self._arity == other._arity and self._terms == other._terms
        if isinstance(other, (int, Fraction)) or isinstance(other, type(ZERO)):
            return self == SparsePolynomial.constant(other, self._arity)
        return NotImplemented

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash((self._arity, frozenset(self._terms.items())))
        return self._hash

    def partial_derivative(self, i: int, order: int = 1) -> "SparsePolynomial":
        if not 0 <= i < self._arity:
            raise IndexError(f"variable {i} out of range for arity {self._arity}")
        if order < 1:
            raise ValueError("derivative order must be positive")
        out: dict[MultiIndex, mpq] = {}
        for alpha, c in self._terms.items():
            e = alpha[i]
            if e < order:
                continue
            factor = 1
            for r in range(order):
                factor *= e - r
            beta = alpha[:i] + (e - order,) + alpha[i + 1:]
            out[beta] = out.get(beta, ZERO) + c * factor
        return SparsePolynomial._raw({b: c for b, c in out.items() if c}, self._arity)

    def evaluate(self, point: Sequence[Rational]) -> mpq:
        if len(point) != self._arity:
            raise ValueError(f"point has length {len(point)}, expected {self._arity}")
        pt = [Q(v) for v in point]
        total = ZERO
        for alpha, c in self._terms.items():
            term = c
            for v, e in zip(pt, alpha):
                if e:
                    term *= v**e
            total += term
        return total

    def evaluate_float(self, point: Sequence[float]) -> float:
        total = 0.0
        for alpha, c in self._terms.items():
            term = float(c)
            for v, e in zip(point, alpha):
                if e:
                    term *= v**e
            total += term
        return total

    def substitute(
        self, images: Sequence["SparsePolynomial"], target_arity: int | None = None
    ) -> "SparsePolynomial":
        """Compose: replace variable ``i`` by ``images[i]`` (all of a common arity)."""
        if len(images) != self._arity:
            raise ValueError("one image per variable is required")
        if target_arity is None:
            if not images:
                raise ValueError("target arity is required for an empty substitution")
            target_arity = images[0].arity
        target = target_arity
        powers: list[dict[int, SparsePolynomial]] = [{0: SparsePolynomial.one(target)} for _ in images]

        def power(i: int, e: int) -> SparsePolynomial:
            cache = powers[i]
            if e not in cache:
                cache[e] = power(i, e - 1) * images[i]
            return cache[e]

        out: dict[MultiIndex, mpq] = {}
        for alpha, c in self._terms.items():
            term = SparsePolynomial.constant(c, target)
            for i, e in enumerate(alpha):
                if e:
                    term = term * power(i, e)
            for g, v in term._terms.items():
                out[g] = out.get(g, ZERO) + v
        return SparsePolynomial._raw({g: v for g, v in out.items() if v}, target)

    def __repr__(self) -> str:
        return f"SparsePolynomial({self.to_text()!r}, arity={self._arity})"

    def __str__(self) -> str:
        return self.to_text()

    def to_text(self, names: Sequence[str] | None = None) -> str:
        """Canonical text: descending graded-lex terms, rationals as ``num/den``."""
        if names is None:
            names = ["x"] if self._arity == 1 else [f"x{i + 1}" for i in range(self._arity)]
        if not self._terms:
            return "0"
        parts: list[str] = []
        for alpha, c in self.items():
            factors = []
            for name, e in zip(names, alpha):
                if e == 1:
                    factors.append(name)
                elif e > 1:
                    factors.append(f"{name}^{e}")
            mono = "*".join(factors)
            mag = abs(c)
            if mono and mag == 1:
                body = mono
            elif mono:
                body = f"{mag}*{mono}"
            else:
                body = str(mag)
            if not parts:
                parts.append(("-" if c < 0 else "") + body)
            else:
                parts.append(("- " if c < 0 else "+ ") + body)
        return " ".join(parts)

    def to_json(self) -> dict:
        return {
            "arity": self._arity,
            "terms": [[list(a), str(c)] for a, c in self.items()],
        }

    @classmethod
    def from_json(cls, data: Mapping) -> "SparsePolynomial":
        return cls({tuple(a): mpq(c) for a, c in data["terms"]}, int(data["arity"]))


def add(f: SparsePolynomial, g: SparsePolynomial) -> SparsePolynomial:
    return f + g


def mul(f: SparsePolynomial, g: SparsePolynomial) -> SparsePolynomial:
    return f * g


def partial_derivative(f: SparsePolynomial, i: int, order: int = 1) -> SparsePolynomial:
    return f.partial_derivative(i, order)


def evaluate(f: SparsePolynomial, point: Sequence[Rational]) -> mpq:
    return f.evaluate(point)


def poly_sum(polys: Iterable[SparsePolynomial], arity: int) -> SparsePolynomial:
    out: dict[MultiIndex, mpq] = {}
    for p in polys:
        for a, c in p.terms.items():
            out[a] = out.get(a, ZERO) + c
    return SparsePolynomial._raw({a: c for a, c in out.items() if c}, arity)


def is_mpq(value) -> bool:
    return isinstance(value, type(ZERO))


__all__ = [
    "MultiIndex",
    "SparsePolynomial",
    "Q",
    "add",
    "mul",
    "partial_derivative",
    "evaluate",
    "multi_indices",
    "multi_indices_upto",
    "poly_sum",
    "grlex_key",
]
