"""Agile multi-satellite observation planning by beam search over command choices."""

__version__ = "0.1.0"
