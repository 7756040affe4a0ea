"""Dual-view temporal knowledge graph extrapolation."""

__version__ = "0.1.0"
