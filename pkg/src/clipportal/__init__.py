"""Client-side web-clipping portal toolkit."""

__version__ = "0.1.0"
