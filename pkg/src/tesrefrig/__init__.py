"""Simulation and cooling-power control of a PCM-backed vapour-compression refrigeration cycle."""

__version__ = "0.1.0"
