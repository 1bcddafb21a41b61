"""Weak laws of large numbers for linear processes with heavy-tailed innovations."""

__version__ = "0.1.0"
