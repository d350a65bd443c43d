"""Hybrid constraint acquisition with query-driven interactive refinement."""

__version__ = "0.1.0"
