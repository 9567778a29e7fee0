"""Numerical companion for the symmetric Gaussian isoperimetric problem."""

__version__ = "0.1.0"
