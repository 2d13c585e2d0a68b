"""Simulation, wire protocol and data pipeline for a magnetic tactile glove."""

__version__ = "0.1.0"
