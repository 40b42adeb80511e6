"""Edge-alignment view selection for parallel-beam tomography."""

__version__ = "0.1.0"
