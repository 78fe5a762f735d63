"""Time-dependent natural gas / hydrogen pipeline network graphs."""

__version__ = "0.1.0"
