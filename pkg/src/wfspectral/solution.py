"""Global solution of the forward equation on every stratum of the simplex.

The solution is a finite sum of exponentials in time.  On the interior it is
the eigen-expansion of the projected initial delta; on every lower face its
modes are fixed by the exact evolution law ``[u, phi](t) = phi(p) e^{-lam t}``
for the lifted test functions ``phi = prod_{i in F} x^i * X^{(k)}_{j,b}``;
vertex point masses come from the martingale ``[u, x^i] = p^i``.

Truncation: the interior keeps eigen-degrees ``m <= M``, a ``k``-face keeps
``j <= M + n - k``.  Together these test functions span every polynomial of
degree ``<= M + n + 1``, so all moments up to that degree are exact.
"""

from __future__ import annotations

import json
import math
from collections import defaultdict
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field

from gmpy2 import mpq

from wfspectral.expsum import ExponentialSum
from wfspectral.operator import (
    apply_backward,
    eigen_degree,
    eigenbasis,
    eigenvalue,
    solve_gram,
)
from wfspectral.polynomial import ONE, ZERO, MultiIndex, Q, Rational, SparsePolynomial, poly_sum
from wfspectral.simplex import (
    Face,
    FaceMeasure,
    Stratification,
    _monomial_integral,
    ambient_point,
    chart_point,
    coordinate,
    lift_to_ambient,
    lifted_weight,
    reindex,
    restrict_to_face,
    weight_in_chart,
    weight_polynomial,
)


class VerificationError(RuntimeError):
    """A built solution violated an identity that must hold exactly."""


class SpectrumError(VerificationError):
    pass


@dataclass
class FaceDensity:
    """Density on one face: ``sum_rate modes[rate](y) e^{-rate t}`` in the face chart."""

    face: Face
    modes: dict[mpq, SparsePolynomial] = field(default_factory=dict)

    def rates(self) -> list[mpq]:
        return sorted(self.modes)

    def integral_against(self, psi: SparsePolynomial, measure: Rational = 1) -> ExponentialSum:
        """``(u_F, psi)_F`` as an exponential sum; ``psi`` in the face chart."""
        k = self.face.dim
        c = Q(measure)
        out = {}
        for rate, poly in self.modes.items():
            acc = ZERO
            for a, ca in poly.terms.items():
                for b, cb in psi.terms.items():
                    acc += ca * cb * _monomial_integral(tuple(x + y for x, y in zip(a, b)), 0, k)
            out[rate] = acc * c
        return ExponentialSum(out)

    def evaluate(self, x: Sequence, t: float) -> float:
        pt = [Q(v) if not isinstance(v, float) else mpq(v) for v in x]
        vals = [(float(rate), float(poly.evaluate(pt))) for rate, poly in self.modes.items()]
        vals.sort(key=lambda rv: (-abs(rv[1]), rv[0]))
        return math.fsum(v * math.exp(-r * t) for r, v in vals)

    def to_json(self) -> dict:
        return {
            "face": str(self.face),
            "modes": [{"rate": str(r), "poly": self.modes[r].to_json()} for r in self.rates()],
        }

    @classmethod
    def from_json(cls, data: Mapping) -> "FaceDensity":
        return cls(
            Face.parse(data["face"]),
            {mpq(m["rate"]): SparsePolynomial.from_json(m["poly"]) for m in data["modes"]},
        )


@dataclass
class VertexMass:
    allele: int
    trajectory: ExponentialSum


@dataclass(frozen=True)
class SolveConfig:
    """Start point ``p`` (barycentric, length ``n + 1``), truncation ``M`` and face measures."""

    p: tuple[mpq, ...]
    M: int
    measure: FaceMeasure = field(default_factory=FaceMeasure)

    def __post_init__(self):
        p = tuple(Q(v) for v in self.p)
        object.__setattr__(self, "p", p)
        if len(p) < 2:
            raise ValueError("at least two alleles are required")
        if sum(p) != 1:
            raise ValueError(f"start frequencies must sum to 1, got {sum(p)}")
        if any(v <= 0 for v in p):
            raise ValueError("start point must be strictly interior (all frequencies > 0)")
        if self.M < 0:
            raise ValueError("truncation degree must be non-negative")

    @classmethod
    def create(cls, p: Sequence[Rational], M: int, allele_count: int | None = None,
               measure: FaceMeasure | None = None) -> "SolveConfig":
        """Accept either all ``n + 1`` frequencies or the ``n`` free ones ``p^1..p^n``."""
        vals = [Q(v) for v in p]
        if allele_count is not None and len(vals) == allele_count - 1:
            vals = [1 - sum(vals)] + vals
        if allele_count is not None and len(vals) != allele_count:
            raise ValueError(f"expected {allele_count} frequencies")
        return cls(tuple(vals), M, measure or FaceMeasure())

    @property
    def allele_count(self) -> int:
        return len(self.p)

    @property
    def n(self) -> int:
        return len(self.p) - 1

    def face_truncation(self, k: int) -> int:
        return self.M + self.n - k


class _Pairing:
    """Cached moments ``c_F int_F U_rate y^mu`` of one face density."""

    def __init__(self, density: FaceDensity, measure: mpq):
        self.k = density.face.dim
        self.c = measure
        self.rates = density.rates()
        self._terms = [list(density.modes[r].terms.items()) for r in self.rates]
        self._cache: dict[MultiIndex, list[mpq]] = {}

    def _moments(self, mu: MultiIndex) -> list[mpq]:
        got = self._cache.get(mu)
        if got is None:
            k = self.k
            got = []
            for terms in self._terms:
                acc = ZERO
                for g, c in terms:
                    acc += c * _monomial_integral(tuple(a + b for a, b in zip(g, mu)), 0, k)
                got.append(acc)
            self._cache[mu] = got
        return got

    def pair(self, psi: SparsePolynomial) -> dict[mpq, mpq]:
        totals = [ZERO] * len(self.rates)
        for mu, coef in psi.terms.items():
            for r, v in enumerate(self._moments(mu)):
                if v:
                    totals[r] += coef * v
        return {rate: tot * self.c for rate, tot in zip(self.rates, totals) if tot}


class GlobalSolution:
    """Truncated global solution: densities on faces of dim >= 1 plus vertex masses."""

    def __init__(self, config: SolveConfig, densities: Mapping[Face, FaceDensity],
                 vertices: Mapping[int, VertexMass]):
        self.config = config
        self.strata = Stratification(config.allele_count)
        self.densities = dict(densities)
        self.vertices = dict(vertices)

    @property
    def n(self) -> int:
        return self.config.n

    @property
    def M(self) -> int:
        return self.config.M

    @property
    def p(self) -> tuple[mpq, ...]:
        return self.config.p

    @property
    def interior(self) -> FaceDensity:
        return self.densities[self.strata.interior]

    def faces(self) -> list[FaceDensity]:
        return [self.densities[f] for f in self.strata.faces() if 0 < f.dim < self.n]

    def density(self, face: Face) -> FaceDensity:
        if face not in self.densities:
            raise KeyError(f"no density for face {face}")
        return self.densities[face]

    def pair(self, phi: SparsePolynomial) -> ExponentialSum:
        """``[u, phi]`` for an ambient polynomial ``phi`` (arity ``n``)."""
        n = self.n
        out = ExponentialSum()
        measure = self.config.measure
        for face, dens in self.densities.items():
            psi = restrict_to_face(phi, face, n)
            if psi.is_zero():
                continue
            out = out + dens.integral_against(psi, measure(face))
        for i, vm in self.vertices.items():
            e = [ONE if a == i else ZERO for a in range(1, n + 1)]
            val = phi.evaluate(e)
            if val:
                out = out + vm.trajectory.scale(val)
        return out

    def total_mass(self) -> ExponentialSum:
        return self.pair(SparsePolynomial.one(self.n))

    def face_probability(self, face: Face) -> ExponentialSum:
        if face not in self.strata:
            raise KeyError(f"{face} is not a face of this simplex")
        if face.dim == 0:
            return self.vertices[face.alleles[0]].trajectory
        dens = self.density(face)
        return dens.integral_against(SparsePolynomial.one(face.dim), self.config.measure(face))

    def moment(self, alpha: Sequence[int]) -> ExponentialSum:
        """``[u, x^alpha]`` with ``alpha`` over the free coordinates ``x^1..x^n``."""
        alpha = tuple(int(a) for a in alpha)
        if len(alpha) != self.n:
            raise ValueError(f"alpha must have {self.n} entries")
        if sum(alpha) > self.M:
            raise ValueError(f"|alpha| = {sum(alpha)} exceeds the truncation degree {self.M}")
        return self.pair(SparsePolynomial.monomial(alpha))

    def evaluate_density(self, face: Face, x: Sequence[float], t: float) -> float:
        if face.dim == 0:
            raise ValueError("vertices carry point masses, not densities")
        if t < 0:
            raise ValueError("t must be non-negative")
        x = list(x)
        if len(x) != face.dim:
            raise ValueError(f"point must have {face.dim} coordinates")
        if any(v < 0 for v in x) or sum(x) > 1:
            raise ValueError(f"point {x} lies outside the closed face")
        return self.density(face).evaluate(x, t)

    def verify(self) -> dict[str, bool]:
        """Exact mass and martingale identities; raises on failure."""
        mass = self.total_mass()
        if mass != ExponentialSum.constant(1):
            raise VerificationError(f"mass identity failed: {mass}")
        for i in range(1, self.n + 1):
            e = [0] * self.n
            e[i - 1] = 1
            mom = self.pair(SparsePolynomial.monomial(e))
            if mom != ExponentialSum.constant(self.p[i]):
                raise VerificationError(f"martingale identity failed for allele {i}: {mom}")
        return {"mass": True, "martingale": True}

    def to_json(self) -> dict:
        cfg = self.config
        return {
            "allele_count": cfg.allele_count,
            "p": [str(v) for v in cfg.p],
            "M": cfg.M,
            "measure": cfg.measure.to_json(),
            "densities": [self.densities[f].to_json() for f in sorted(self.densities)],
            "vertices": [
                {"allele": i, "trajectory": self.vertices[i].trajectory.to_json()}
                for i in sorted(self.vertices)
            ],
        }

    @classmethod
    def from_json(cls, data: Mapping) -> "GlobalSolution":
        config = SolveConfig(
            tuple(mpq(v) for v in data["p"]),
            int(data["M"]),
            FaceMeasure.from_json(data.get("measure", {})),
        )
        if config.allele_count != int(data["allele_count"]):
            raise ValueError("allele_count does not match p")
        densities = {}
        for d in data["densities"]:
            fd = FaceDensity.from_json(d)
            densities[fd.face] = fd
        vertices = {
            int(v["allele"]): VertexMass(int(v["allele"]), ExponentialSum.from_json(v["trajectory"]))
            for v in data["vertices"]
        }
        return cls(config, densities, vertices)

    def dumps(self, manifest: Mapping | None = None) -> str:
        data = self.to_json()
        if manifest is not None:
            data = {"manifest": dict(manifest), **data}
        return json.dumps(data, indent=1, sort_keys=True) + "\n"

    @classmethod
    def loads(cls, text: str) -> "GlobalSolution":
        return cls.from_json(json.loads(text))

    def __eq__(self, other) -> bool:
        if not isinstance(other, GlobalSolution):
            return NotImplemented
        return self.to_json() == other.to_json()


def _combine(k: int, j: int, coeffs: Sequence[mpq]) -> SparsePolynomial:
    basis = eigenbasis(k, j)
    return poly_sum((b.poly.scale(c) for b, c in zip(basis, coeffs) if c), k)


def project_delta(config: SolveConfig) -> FaceDensity:
    """Interior modes: per degree, solve the Gram system against ``w(p) X_b(p)``."""
    n = config.n
    face = Stratification(config.allele_count).interior
    x = ambient_point(config.p)
    wp = ONE
    for v in config.p:
        wp *= v
    c = config.measure(face)
    modes = {}
    for m in range(config.M + 1):
        basis = eigenbasis(n, m)
        rhs = [wp * b.poly.evaluate(x) for b in basis]
        if not any(rhs):
            continue
        coeffs = solve_gram(n, m, rhs, c)
        modes[eigenvalue(n, m)] = _combine(n, m, coeffs)
    return FaceDensity(face, modes)


def _check_rate(k: int, rate: mpq, limit: int) -> None:
    j = eigen_degree(k, rate)
    if j is None or j > limit:
        raise SpectrumError(f"rate {rate} is not in the retained spectrum of a {k}-face")


def cascade(config: SolveConfig, interior: FaceDensity, check_eigen: bool = False) -> GlobalSolution:
    """Determine every lower face and the vertex masses from the interior density.

    Faces are processed by decreasing dimension; the law for a test function
    of face ``F`` subtracts the already-known pairings with every strictly
    larger face containing ``F``.  With ``check_eigen`` each lifted test
    function is also checked to be an exact backward eigenfunction.
    """
    n = config.n
    strata = Stratification(config.allele_count)
    measure = config.measure
    p = config.p
    densities: dict[Face, FaceDensity] = {interior.face: interior}
    pairings: dict[Face, _Pairing] = {interior.face: _Pairing(interior, measure(interior.face))}

    for k in range(n - 1, 0, -1):
        limit = config.face_truncation(k)
        for face in strata.faces(k):
            supers = strata.superfaces(face)
            weights = {g: weight_in_chart(face, g) for g in supers}
            wp = ONE
            for a in face.alleles:
                wp *= p[a]
            y = chart_point(face, p)
            amb_w = lifted_weight(face, strata) if check_eigen else None
            modes: dict[mpq, list[SparsePolynomial]] = defaultdict(list)
            for j in range(limit + 1):
                basis = eigenbasis(k, j)
                own = eigenvalue(k, j)
                rhs: dict[mpq, list[mpq]] = defaultdict(lambda: [ZERO] * len(basis))
                for idx, x in enumerate(basis):
                    if check_eigen:
                        phi = amb_w * lift_to_ambient(x.poly, face, strata)
                        if apply_backward(n, phi) != phi.scale(-own):
                            raise VerificationError(f"lifted test function on {face} is not an eigenfunction")
                    rhs[own][idx] += wp * x.poly.evaluate(y)
                    for g in supers:
                        psi = weights[g] * reindex(x.poly, face, g)
                        for rate, val in pairings[g].pair(psi).items():
                            rhs[rate][idx] -= val
                for rate, vec in rhs.items():
                    if not any(vec):
                        continue
                    _check_rate(k, rate, limit)
                    coeffs = solve_gram(k, j, vec, measure(face))
                    modes[rate].append(_combine(k, j, coeffs))
            dens = FaceDensity(face, {})
            for rate, parts in modes.items():
                poly = poly_sum(parts, k)
                if not poly.is_zero():
                    dens.modes[rate] = poly
            densities[face] = dens
            pairings[face] = _Pairing(dens, measure(face))

    vertices = {}
    for i in range(n + 1):
        traj: dict[mpq, mpq] = {ZERO: p[i]}
        for face, pr in pairings.items():
            if i not in face:
                continue
            for rate, val in pr.pair(coordinate(face, i)).items():
                traj[rate] = traj.get(rate, ZERO) - val
        vertices[i] = VertexMass(i, ExponentialSum(traj))
    return GlobalSolution(config, densities, vertices)


def solve(config: SolveConfig, verify: bool = True, check_eigen: bool = False) -> GlobalSolution:
    """Build the truncated global solution and (by default) verify mass and martingale."""
    sol = cascade(config, project_delta(config), check_eigen=check_eigen)
    if verify:
        sol.verify()
    return sol


def heterozygosity_functional(sol: GlobalSolution) -> ExponentialSum:
    """``(n+1)! [u, w_n]`` computed from the spectral solution."""
    w = lifted_weight(sol.strata.interior, sol.strata)
    return sol.pair(w).scale(math.factorial(sol.n + 1))


__all__ = [
    "ExponentialSum",
    "FaceDensity",
    "VertexMass",
    "SolveConfig",
    "GlobalSolution",
    "VerificationError",
    "SpectrumError",
    "project_delta",
    "cascade",
    "solve",
    "heterozygosity_functional",
    "weight_polynomial",
]
