"""Verification toolkit for separation-of-variables representations of SL(2,C) spin chains."""

__version__ = "0.1.0"
