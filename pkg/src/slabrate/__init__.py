"""Regression-rate measurement from slab-burner image sequences."""

__version__ = "0.1.0"
