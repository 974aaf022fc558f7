"""Area-interaction point processes: samplers, percolation and sharpness diagnostics."""

__version__ = "0.1.0"
