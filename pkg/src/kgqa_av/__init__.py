"""Answer-candidate validation and filtering for knowledge-graph QA systems."""

__version__ = "0.1.0"
