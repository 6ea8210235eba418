"""Time-evolving class distributions with uncertainty for asynchronous event sequences."""

__version__ = "0.1.0"
