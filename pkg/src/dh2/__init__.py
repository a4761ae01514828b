"""Directional H2-matrix compression of the Helmholtz single-layer Galerkin matrix."""

__version__ = "0.1.0"
