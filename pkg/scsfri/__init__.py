"""Sparse common-support FRI estimation of multipath channels."""

__version__ = "0.1.0"
