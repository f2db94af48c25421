"""Relation scoring for dynamic scene graph generation on synthetic videos."""

__version__ = "0.1.0"
