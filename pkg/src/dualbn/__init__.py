"""Desk-scale from-scratch training stack with branch-separated
batch normalization and a frequency-domain robustness toolbox."""

__version__ = "0.1.0"
