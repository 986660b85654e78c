"""Optimal body-surface sensor placement with Gaussian processes."""

__version__ = "0.1.0"
