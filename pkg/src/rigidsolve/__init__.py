"""Black-box polynomial system solving by rigid continuation."""

__version__ = "0.1.0"
