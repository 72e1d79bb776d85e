"""Attention entropy theory and entropy-preserving attention scaling."""

__version__ = "0.1.0"
