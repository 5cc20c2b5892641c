"""Multimode squeezing in a self-imaging optical parametric oscillator."""

__version__ = "0.1.0"
