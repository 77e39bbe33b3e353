"""hetman: a gateway-based manager for heterogeneous simulated networks."""

__version__ = "0.1.0"
