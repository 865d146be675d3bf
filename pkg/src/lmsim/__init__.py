"""Coupled consumer-choice and last-mile freight simulator."""

__version__ = "0.1.0"
