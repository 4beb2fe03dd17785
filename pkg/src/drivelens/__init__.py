"""Layered scene description and anomaly evaluation toolkit for driving imagery."""

__version__ = "0.1.0"
