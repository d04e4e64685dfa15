"""Causal-discovery estimators and bias-aware scoring on knockout-style data."""

__version__ = "0.1.0"
