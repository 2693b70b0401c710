"""Log-space flow matching for heavy-tailed data."""

__version__ = "0.1.0"
