"""minicheck: incremental whole-program analysis for a small concurrent C-like language."""

__version__ = "0.1.0"
