"""Subgraph neural networks: property-aware message passing from anchor patches."""

__version__ = "0.1.0"
