"""Belief-space planning for probabilistic signal temporal logic specifications."""

__version__ = "0.1.0"
