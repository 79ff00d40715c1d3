"""Nonparametric conditional exceedance-risk mapping for spatial data."""

__version__ = "0.1.0"
