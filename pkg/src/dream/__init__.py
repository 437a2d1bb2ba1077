"""Doubly robust interval estimation for the optimal policy value in online bandits."""

__version__ = "0.1.0"
