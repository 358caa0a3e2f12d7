"""Pseudo-spectral solver and small-scale diagnostics for the fractional Burgers equation on the circle."""

__version__ = "0.1.0"
