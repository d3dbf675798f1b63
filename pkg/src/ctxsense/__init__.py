"""Per-second behaviour and GNSS-environment context detection from smartphone logs."""

__version__ = "0.1.0"
