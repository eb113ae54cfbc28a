"""sessionkit: session-typed channels, secure delegation, and a protocol checker."""

from importlib import resources


def data_path(name: str):
    """Path to a packaged data file (demo protocols, demo SRP registry)."""
    return resources.files(__name__) / "data" / name


__version__ = "0.1.0"
