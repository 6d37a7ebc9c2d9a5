"""Derived quantities: absorption times, hitting faces, fixation, heterozygosity.

Absorption moments are taken from the survival function
``S(t) = 1 - P(T <= t) = sum_lam a_lam e^{-lam t}``:
``E[T] = int S = sum a_lam / lam`` and ``E[T^2] = 2 int t S = sum 2 a_lam / lam^2``.
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass
from itertools import combinations

from gmpy2 import mpq

from wfspectral.expsum import ExponentialSum
from wfspectral.polynomial import ONE, ZERO, Q, Rational
from wfspectral.simplex import Face
from wfspectral.solution import GlobalSolution, heterozygosity_functional


class TruncationArtifact(ArithmeticError):
    """A derived quantity that is meaningless at the chosen truncation degree."""


def absorption_cdf(sol: GlobalSolution, k: int) -> ExponentialSum:
    """``P(T^{k+1} <= t)``: mass on faces of dimension ``<= k``."""
    if not 0 <= k < sol.n:
        raise ValueError(f"k must satisfy 0 <= k < n = {sol.n}")
    out = ExponentialSum.constant(1)
    for face in sol.strata.faces():
        if face.dim > k:
            out = out - sol.face_probability(face)
    return out


@dataclass(frozen=True)
class AbsorptionReport:
    k: int
    cdf: ExponentialSum
    mean: float
    second_moment: float
    residual: float

    @property
    def variance(self) -> float:
        return self.second_moment - self.mean**2

    def exact_mean(self) -> mpq:
        return _survival_integral(self.cdf, 1)

    def exact_second_moment(self) -> mpq:
        return _survival_integral(self.cdf, 2)


def _survival_integral(cdf: ExponentialSum, power: int) -> mpq:
    survival = ExponentialSum.constant(1) - cdf
    if survival.limit:
        raise TruncationArtifact("survival function does not decay")
    total = ZERO
    for rate, amp in survival.terms.items():
        total += math.factorial(power) * amp / rate**power
    return total


def absorption_time_moments(sol: GlobalSolution, k: int) -> AbsorptionReport:
    """``E[T^{k+1}]`` and ``E[(T^{k+1})^2]`` with the residual ``cdf(0)``."""
    cdf = absorption_cdf(sol, k)
    mean = _survival_integral(cdf, 1)
    second = _survival_integral(cdf, 2)
    if mean <= 0:
        raise TruncationArtifact(f"non-positive mean absorption time {float(mean)} at M = {sol.M}")
    return AbsorptionReport(k, cdf, float(mean), float(second), float(cdf.at_zero()))


def _g(q: Sequence, one):
    # q: frequencies of the target alleles (absolute, not renormalised)
    if len(q) == 1:
        return q[0]
    total = None
    for i in range(len(q)):
        rest = q[:i] + q[i + 1:]
        denom = one
        for v in rest:
            denom = denom - v
        term = q[i] / denom * _g(rest, one)
        total = term if total is None else total + term
    return total


def hitting_face_distribution(p: Sequence[Rational], target_alleles: Sequence[int]) -> mpq:
    """Probability that the first face of dimension ``len(target) - 1`` reached is ``target``."""
    p = [Q(v) for v in p]
    target = sorted(set(int(a) for a in target_alleles))
    if not target or any(a < 0 or a >= len(p) for a in target):
        raise ValueError(f"target {target_alleles} is not a set of alleles of p")
    if any(p[a] <= 0 for a in target):
        raise ValueError("target alleles must be present in p")
    if len(target) == len(p):
        return ONE
    return _g([p[a] for a in target], ONE)


def hitting_distribution(p: Sequence[Rational], size: int) -> dict[Face, mpq]:
    """``g`` over every ``size``-subset of alleles."""
    return {
        Face(c): hitting_face_distribution(p, c)
        for c in combinations(range(len(p)), size)
    }


class Jet:
    """Exact second-order Taylor jet in ``n`` variables (value, gradient, Hessian)."""

    __slots__ = ("v", "g", "h")

    def __init__(self, v, g, h):
        self.v, self.g, self.h = v, g, h

    @classmethod
    def constant(cls, c, n: int) -> "Jet":
        return cls(Q(c), [ZERO] * n, [[ZERO] * n for _ in range(n)])

    @classmethod
    def variable(cls, value, i: int, n: int) -> "Jet":
        g = [ZERO] * n
        g[i] = ONE
        return cls(Q(value), g, [[ZERO] * n for _ in range(n)])

    def __add__(self, o: "Jet") -> "Jet":
        return Jet(self.v + o.v, [a + b for a, b in zip(self.g, o.g)],
                   [[a + b for a, b in zip(r, s)] for r, s in zip(self.h, o.h)])

    def __sub__(self, o: "Jet") -> "Jet":
        return Jet(self.v - o.v, [a - b for a, b in zip(self.g, o.g)],
                   [[a - b for a, b in zip(r, s)] for r, s in zip(self.h, o.h)])

    def __mul__(self, o: "Jet") -> "Jet":
        n = len(self.g)
        return Jet(
            self.v * o.v,
            [self.v * o.g[i] + o.v * self.g[i] for i in range(n)],
            [[self.v * o.h[i][j] + o.v * self.h[i][j] + self.g[i] * o.g[j] + self.g[j] * o.g[i]
              for j in range(n)] for i in range(n)],
        )

    def reciprocal(self) -> "Jet":
        n = len(self.g)
        if self.v == 0:
            raise ZeroDivisionError("jet reciprocal at zero")
        inv = 1 / self.v
        return Jet(
            inv,
            [-inv**2 * self.g[i] for i in range(n)],
            [[2 * inv**3 * self.g[i] * self.g[j] - inv**2 * self.h[i][j] for j in range(n)]
             for i in range(n)],
        )

    def __truediv__(self, o: "Jet") -> "Jet":
        return self * o.reciprocal()


def backward_residual(p: Sequence[Rational], target_alleles: Sequence[int]) -> mpq:
    """``L* g`` at the interior point ``p``, in the ambient free chart (exact)."""
    p = [Q(v) for v in p]
    n = len(p) - 1
    free = [Jet.variable(p[a], a - 1, n) for a in range(1, n + 1)]
    one = Jet.constant(1, n)
    x0 = one
    for f in free:
        x0 = x0 - f
    coords = [x0] + free
    target = sorted(set(target_alleles))
    if len(target) == len(p):
        return ZERO
    g = _g([coords[a] for a in target], one)
    y = p[1:]
    out = ZERO
    for i in range(n):
        for j in range(n):
            a_ij = y[i] * ((1 if i == j else 0) - y[j])
            out += a_ij * g.h[i][j]
    return out / 2


def exact_k_alleles_probability(sol: GlobalSolution, alleles: Sequence[int]) -> ExponentialSum:
    face = Face.of(*alleles)
    if face.dim < 1:
        raise ValueError("coexistence needs at least two alleles")
    return sol.face_probability(face)


def heterozygosity(sol: GlobalSolution) -> ExponentialSum:
    return heterozygosity_functional(sol)


def loss_rate(k: int) -> mpq:
    if k < 1:
        raise ValueError("k must be at least 1")
    return mpq(k * (k + 1), 2)


def fixation_probabilities(sol: GlobalSolution, t: float) -> list[float]:
    if t < 0:
        raise ValueError("t must be non-negative")
    return [sol.vertices[i].trajectory(t) for i in range(sol.n + 1)]


def fixation_trajectories(sol: GlobalSolution) -> list[ExponentialSum]:
    return [sol.vertices[i].trajectory for i in range(sol.n + 1)]


__all__ = [
    "AbsorptionReport",
    "Jet",
    "TruncationArtifact",
    "absorption_cdf",
    "absorption_time_moments",
    "backward_residual",
    "exact_k_alleles_probability",
    "fixation_probabilities",
    "fixation_trajectories",
    "heterozygosity",
    "hitting_distribution",
    "hitting_face_distribution",
    "loss_rate",
]
