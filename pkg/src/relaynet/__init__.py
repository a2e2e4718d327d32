"""Capacity-constrained relay networks: simulation, fluid limits and large-deviation rates."""

__version__ = "0.1.0"
