"""Granger-causal discovery with a sparse attention transformer."""

__version__ = "0.1.0"
