"""Numerical laboratory for spontaneous wave-function collapse models."""

__version__ = "0.1.0"
