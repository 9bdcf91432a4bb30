"""Convex hull approximation from range-emptiness queries."""

__version__ = "0.1.0"
