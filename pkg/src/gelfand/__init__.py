"""Numerical laboratory for the Gelfand problem -Lap u = rho^2 V e^u with Dirichlet data."""

__version__ = "0.1.0"
