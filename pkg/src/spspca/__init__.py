"""Sparse PCA with a single-parameter, eigenvalue-adaptive ridge penalty."""

__version__ = "0.1.0"
