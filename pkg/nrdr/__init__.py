"""Non-redundant spectral dimensionality reduction."""

__version__ = "0.1.0"
