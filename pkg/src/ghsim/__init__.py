"""Deterministic greenhouse monitoring and irrigation control simulator."""

__version__ = "0.1.0"
