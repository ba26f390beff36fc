"""Stochastic 2D vorticity simulation and cascade-flux diagnostics on the torus."""

__version__ = "0.1.0"
