from gmpy2 import mpq
from hypothesis import strategies as st

from wfspectral.polynomial import SparsePolynomial

small_rationals = st.fractions(min_value=-3, max_value=3, max_denominator=7).map(
    lambda f: mpq(f.numerator, f.denominator)
)


def exponents(arity: int, max_degree: int):
    return st.lists(st.integers(0, max_degree), min_size=arity, max_size=arity).filter(
        lambda a: sum(a) <= max_degree
    ).map(tuple)


def polynomials(arity: int, max_degree: int = 3, max_terms: int = 4):
    return st.dictionaries(exponents(arity, max_degree), small_rationals, max_size=max_terms).map(
        lambda terms: SparsePolynomial(terms, arity)
    )


def points(arity: int):
    return st.lists(small_rationals, min_size=arity, max_size=arity)


def interior_points(allele_count: int):
    """Rational interior points of the simplex on ``allele_count`` alleles."""
    return st.lists(st.integers(1, 9), min_size=allele_count, max_size=allele_count).map(
        lambda w: [mpq(v, sum(w)) for v in w]
    )


def pytest_terminal_summary(terminalreporter):
    import sys

    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "RESULTS", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


__all__ = ["small_rationals", "polynomials", "points", "interior_points"]
