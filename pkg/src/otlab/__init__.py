"""Optimal transport on finite geodesic metric measure spaces."""

__version__ = "0.1.0"
