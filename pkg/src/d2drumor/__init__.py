"""Rumor-driven throughput degradation in D2D-underlaid cellular networks."""

__version__ = "0.1.0"
