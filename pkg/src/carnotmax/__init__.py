"""Maximal operators, commutators and Lipschitz/Morrey functionals on stratified groups."""

__version__ = "0.1.0"
