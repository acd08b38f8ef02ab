"""First-passage percolation on Z^2: passage times, geodesics, fluctuations and shapes."""

__version__ = "0.1.0"
