"""Retrieval-based UAV self-localization against geo-tagged satellite tiles."""

__version__ = "0.1.0"
