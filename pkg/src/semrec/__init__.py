"""Grounded-description multimodal retrieval for recommendation."""

__version__ = "0.1.0"
