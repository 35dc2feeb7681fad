"""Multiplicative-noise training, Gaussian scale mixture analysis and posterior-moment pruning."""

__version__ = "0.1.0"
