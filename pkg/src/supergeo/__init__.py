"""Computational supergeometry on coordinate superdomains."""

__version__ = "0.1.0"
