"""Evolutionary design of noise-robust variational quantum circuits."""

__version__ = "0.1.0"
