"""Pseudospectral laboratory for the generalized Proudman-Johnson equation."""

__version__ = "0.1.0"
