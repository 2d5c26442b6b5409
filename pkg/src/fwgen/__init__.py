"""Future-work extraction, retrieval-augmented generation, and evaluation."""

__version__ = "0.1.0"
