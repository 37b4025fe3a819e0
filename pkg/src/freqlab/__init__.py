"""Stochastic power-system frequency simulation and histogram analysis."""

__version__ = "0.1.0"
