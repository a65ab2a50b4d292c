"""Randomized analog verification, cross-entropy benchmarking and STOQ compilation."""

__version__ = "0.1.0"
