"""Numerical lab for flea-perturbed double wells and related collapse toy models."""

__version__ = "0.1.0"
