"""Simulation and hypoellipticity checks for ODEs with randomly switching vector fields."""

__version__ = "0.1.0"
