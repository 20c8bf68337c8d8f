"""Explainable knowledge-graph recommendations via policy-guided path reasoning."""

__version__ = "0.1.0"
