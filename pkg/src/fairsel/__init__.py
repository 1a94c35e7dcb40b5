"""Fairness-aware feature selection from information-theoretic feature scores."""

__version__ = "0.1.0"
