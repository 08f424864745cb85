"""Numerical lab for c-convex optimal transport potentials."""

__version__ = "0.1.0"
