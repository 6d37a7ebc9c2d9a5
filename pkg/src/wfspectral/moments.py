"""Closed-form solution of the moment hierarchy.

For the neutral diffusion the moments ``m_alpha(t) = E[X_t^alpha]`` obey

    m_alpha' = -d(d-1)/2 m_alpha + sum_i alpha_i(alpha_i-1)/2 m_{alpha-e_i},   d = |alpha|

which is triangular in the grading by degree.  The diagonal value differs
between degrees >= 1, so every moment is an exact finite exponential sum;
it is integrated here degree by degree with rational arithmetic.  Nothing in
this module touches the spectral construction.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass
from functools import lru_cache
from math import factorial

from gmpy2 import mpq

from wfspectral.polynomial import ONE, ZERO, MultiIndex, Q, Rational, SparsePolynomial, multi_indices_upto
from wfspectral.expsum import ExponentialSum


def diagonal_rate(d: int) -> mpq:
    return mpq(d * (d - 1), 2)


@dataclass(frozen=True)
class MomentSystem:
    """Generator of the moment ODE on all multi-indices of degree ``<= max_degree``."""

    n: int
    max_degree: int

    @property
    def indices(self) -> list[MultiIndex]:
        return multi_indices_upto(self.n, self.max_degree)

    def generator(self) -> dict[MultiIndex, dict[MultiIndex, mpq]]:
        """Row ``alpha`` maps to its nonzero couplings (including the diagonal)."""
        rows = {}
        for alpha in self.indices:
            row = {}
            d = sum(alpha)
            if d > 1:
                row[alpha] = -diagonal_rate(d)
            for i, a in enumerate(alpha):
                if a >= 2:
                    lower = alpha[:i] + (a - 1,) + alpha[i + 1:]
                    row[lower] = mpq(a * (a - 1), 2)
            rows[alpha] = row
        return rows


@lru_cache(maxsize=None)
def _trajectory(p: tuple[mpq, ...], alpha: MultiIndex) -> ExponentialSum:
    d = sum(alpha)
    start = ONE
    for v, a in zip(p, alpha):
        start *= v**a
    if d <= 1:
        return ExponentialSum.constant(start)
    own = diagonal_rate(d)
    # particular solution of m' = -own m + source, source a sum of exponentials
    amps: dict[mpq, mpq] = {}
    for i, a in enumerate(alpha):
        if a < 2:
            continue
        weight = mpq(a * (a - 1), 2)
        lower = _trajectory(p, alpha[:i] + (a - 1,) + alpha[i + 1:])
        for rate, amp in lower.terms.items():
            if rate == own:
                raise ArithmeticError("resonant moment source")
            amps[rate] = amps.get(rate, ZERO) + weight * amp / (own - rate)
    amps[own] = start - sum(amps.values(), ZERO)
    return ExponentialSum(amps)


def moment_trajectory(p: Sequence[Rational], alpha: Sequence[int]) -> ExponentialSum:
    """``E[X_t^alpha]`` for the diffusion started at the free coordinates ``p``.

    ``p`` holds ``p^1..p^n`` (the free coordinates), one per entry of ``alpha``.
    """
    p = tuple(Q(v) for v in p)
    alpha = tuple(int(a) for a in alpha)
    if len(p) != len(alpha):
        raise ValueError("p and alpha must have the same length")
    if any(a < 0 for a in alpha):
        raise ValueError("negative exponent")
    return _trajectory(p, alpha)


def expectation(p: Sequence[Rational], f: SparsePolynomial) -> ExponentialSum:
    """``E[f(X_t)]`` for a polynomial ``f`` in the free coordinates."""
    out = ExponentialSum()
    for alpha, c in f.terms.items():
        out = out + moment_trajectory(p, alpha).scale(c)
    return out


def heterozygosity_from_moments(p: Sequence[Rational], n: int | None = None) -> ExponentialSum:
    """``(n+1)! E[prod_i X^i]`` from the moment hierarchy.

    ``p`` may be the full barycentric point (``n + 1`` entries) or the free
    coordinates only.
    """
    vals = [Q(v) for v in p]
    if n is None:
        n = len(vals) - 1
    if len(vals) == n + 1:
        vals = vals[1:]
    if len(vals) != n:
        raise ValueError(f"expected {n} or {n + 1} coordinates")
    x = [SparsePolynomial.variable(i, n) for i in range(n)]
    w = SparsePolynomial.one(n)
    for xi in x:
        w = w * xi
    rest = SparsePolynomial.one(n)
    for xi in x:
        rest = rest - xi
    return expectation(vals, w * rest).scale(factorial(n + 1))
