"""Polar codes from large binary kernels on the binary erasure channel."""

__version__ = "0.1.0"
