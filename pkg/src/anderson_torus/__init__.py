"""Spectral methods for the renormalized Anderson Hamiltonian on the two-dimensional torus."""

__version__ = "0.1.0"
