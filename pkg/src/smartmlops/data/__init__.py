"""Bundled sample data."""

from importlib.resources import files
from pathlib import Path


def toy_dataset_path() -> Path:
    """Path to the bundled toy CSV (x0, x1 numeric; cat categorical; y binary)."""
    return Path(str(files(__package__) / "toy.csv"))
