"""Relocation of free-floating car-sharing vehicles: zoning, simulation and ranking policy."""
__version__ = "0.1.0"
