"""Numerical thermodynamic formalism for non-uniformly expanding maps."""

__version__ = "0.1.0"
