"""Replay-attack detection from codec-assisted channel residual features."""

__version__ = "0.1.0"
