"""Discrete vortex-ball and mass-displacement toolkit for Ginzburg-Landau fields."""
__version__ = "0.1.0"
