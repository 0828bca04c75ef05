"""Numerical laboratory for local smoothing of Schrodinger operators."""
__version__ = "0.1.0"
