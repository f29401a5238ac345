"""Finite element solver for Cahn-Hilliard flow with wetting boundary conditions."""
__version__ = "0.1.0"
