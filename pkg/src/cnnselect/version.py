"""Package version, echoed into simulation report metadata."""

__version__ = "0.1.0"
