"""Maximal operators on lattice functions: fast stencil path and brute-force oracle."""
from .fast import (MODES, VARIANTS, MaximalRequest, evaluate, local_maximal, local_radii, maximal,
                   maximal_commutator, nonlinear_commutator)
from .oracle import ORACLE_MAX_POINTS, oracle_maximal

__all__ = [
    "MODES", "VARIANTS", "MaximalRequest", "evaluate", "local_maximal", "local_radii", "maximal",
    "maximal_commutator", "nonlinear_commutator", "ORACLE_MAX_POINTS", "oracle_maximal",
]
