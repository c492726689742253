"""Semiclassical scattering laboratory for long-range power-law potentials."""

__version__ = "0.1.0"
