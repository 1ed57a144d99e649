"""Multi-scale point statistics and mixture-of-experts normal estimation."""

__version__ = "0.1.0"
