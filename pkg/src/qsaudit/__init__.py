"""Statistical audit tools for random-quantum-sampling bit-string datasets."""

__version__ = "0.1.0"
