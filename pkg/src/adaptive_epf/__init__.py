"""Adaptive standardisation for day-ahead electricity price forecasting."""

__version__ = "0.1.0"
