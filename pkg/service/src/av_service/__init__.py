"""Reference implementation of the pair-classifier wire protocol."""

__version__ = "0.1.0"
