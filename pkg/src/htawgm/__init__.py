"""Adaptive wavelet Galerkin solver in the hierarchical Tucker format."""

__version__ = "0.1.0"
