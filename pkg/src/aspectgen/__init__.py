"""Aspect-oriented product description enhancement at desk scale."""

__version__ = "0.1.0"
