"""Simulator for the hybrid network model and algorithms parameterized by
neighborhood quality."""

__version__ = "0.1.0"
