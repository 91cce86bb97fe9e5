"""Splitting Gibbs measures of a four-coupling continuous-spin model on the order-2 Cayley tree."""

__version__ = "0.1.0"
