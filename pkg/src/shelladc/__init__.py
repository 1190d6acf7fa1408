"""Asymptotic directional conductivity of periodic shell lattices."""

__version__ = "0.1.0"
