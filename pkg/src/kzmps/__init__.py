"""Kibble-Zurek sweeps of 1D quantum critical points with uniform MPS at
fixed bond dimension, plus finite-entanglement scaling analysis."""

__version__ = "0.1.0"
