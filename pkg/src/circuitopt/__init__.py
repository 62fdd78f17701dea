"""Circuit-based design of optimization algorithms."""
from importlib import resources

__version__ = "0.1.0"


def data_file(name: str) -> str:
    """Path of a bundled example file (netlists, nets, graphs)."""
    return str(resources.files(__name__) / "data" / name)
