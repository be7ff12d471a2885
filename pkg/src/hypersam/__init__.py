"""Multi-robot task allocation and socially-aware navigation sandbox."""

__version__ = "0.1.0"
