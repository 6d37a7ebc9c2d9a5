"""Finite exponential sums in time with exact rational rates and amplitudes."""

from __future__ import annotations

import math
from collections.abc import Iterable, Mapping

from gmpy2 import mpq

from wfspectral.polynomial import ZERO, Q, Rational


class ExponentialSum:
    """``t -> sum_rate amp * exp(-rate * t)`` with exact rational rates and amplitudes."""

    __slots__ = ("_terms",)

    def __init__(self, terms: Mapping[Rational, Rational] | Iterable = ()):
        items = terms.items() if isinstance(terms, Mapping) else terms
        clean: dict[mpq, mpq] = {}
        for rate, amp in items:
            rate, amp = Q(rate), Q(amp)
            if rate < 0:
                raise ValueError("rates must be non-negative")
            clean[rate] = clean.get(rate, ZERO) + amp
        self._terms = {r: a for r, a in clean.items() if a}

    @classmethod
    def constant(cls, c: Rational) -> "ExponentialSum":
        return cls({0: c})

    @property
    def terms(self) -> Mapping[mpq, mpq]:
        return self._terms

    def rates(self) -> list[mpq]:
        return sorted(self._terms)

    def amplitude(self, rate: Rational) -> mpq:
        return self._terms.get(Q(rate), ZERO)

    @property
    def limit(self) -> mpq:
        """Value as ``t -> infinity`` (the rate-0 amplitude)."""
        return self._terms.get(ZERO, ZERO)

    def at_zero(self) -> mpq:
        return sum(self._terms.values(), ZERO)

    def __call__(self, t: float) -> float:
        if t < 0:
            raise ValueError("t must be non-negative")
        # largest amplitudes first; fsum compensates the cancellation near t = 0
        items = sorted(self._terms.items(), key=lambda ra: (-abs(ra[1]), ra[0]))
        return math.fsum(float(a) * math.exp(-float(r) * t) for r, a in items)

    def derivative(self) -> "ExponentialSum":
        return ExponentialSum({r: -r * a for r, a in self._terms.items()})

    def __add__(self, other: "ExponentialSum") -> "ExponentialSum":
        out = dict(self._terms)
        for r, a in other._terms.items():
            out[r] = out.get(r, ZERO) + a
        return ExponentialSum(out)

    def __neg__(self) -> "ExponentialSum":
        return ExponentialSum({r: -a for r, a in self._terms.items()})

    def __sub__(self, other: "ExponentialSum") -> "ExponentialSum":
        return self + (-other)

    def scale(self, c: Rational) -> "ExponentialSum":
        c = Q(c)
        return ExponentialSum({r: a * c for r, a in self._terms.items()})

    def __eq__(self, other) -> bool:
        if isinstance(other, ExponentialSum):
            return self._terms == other._terms
        return NotImplemented

    def __repr__(self) -> str:
        body = " + ".join(f"({a})e^(-{r}t)" for r, a in sorted(self._terms.items()))
        return f"ExponentialSum({body or '0'})"

    def to_json(self) -> list[list[str]]:
        return [[str(r), str(a)] for r, a in sorted(self._terms.items())]

    @classmethod
    def from_json(cls, data) -> "ExponentialSum":
        return cls((mpq(r), mpq(a)) for r, a in data)
