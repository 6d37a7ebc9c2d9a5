"""Spectral solution of the multi-allele Wright-Fisher diffusion.

The package builds the global (all strata) solution of the forward equation
for the neutral Wright-Fisher diffusion on the simplex, together with two
independent checks: the closed moment hierarchy and a discrete-chain
Monte Carlo simulator.
"""

from wfspectral.polynomial import SparsePolynomial, Q
from wfspectral.simplex import Face, Stratification
from wfspectral.operator import eigenpolynomial, eigenvalue
from wfspectral.expsum import ExponentialSum
from wfspectral.solution import SolveConfig, GlobalSolution, solve

__version__ = "0.1.0"

__all__ = [
    "SparsePolynomial",
    "Q",
    "Face",
    "Stratification",
    "eigenpolynomial",
    "eigenvalue",
    "SolveConfig",
    "GlobalSolution",
    "ExponentialSum",
    "solve",
]
