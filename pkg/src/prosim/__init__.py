"""Prediction-based opportunistic routing for vehicular networks."""

__version__ = "0.1.0"
