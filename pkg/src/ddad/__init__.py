"""Train a compact classifier from a frozen one using generated inputs only."""
__version__ = "0.1.0"
