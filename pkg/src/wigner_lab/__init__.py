"""Spectral statistics of Hermitian Wigner matrices: sampling, a certified dense
eigensolver, spectral functionals and seeded Monte Carlo experiments."""

__version__ = "0.1.0"
