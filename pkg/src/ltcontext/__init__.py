"""Unsupervised context retrieval for long-tail entities."""

from pathlib import Path

__version__ = "0.1.0"


def toy_data_dir() -> Path:
    """Directory of the small bundled fixture (catalog, contexts, annotations, ...)."""
    return Path(__file__).parent / "data" / "toy"
