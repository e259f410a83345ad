"""Weighted AoI minimization in multi-UAV IoT data collection."""

__version__ = "0.1.0"
