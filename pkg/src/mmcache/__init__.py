"""Importance-based edge caching for multi-modal content."""

__version__ = "0.1.0"
