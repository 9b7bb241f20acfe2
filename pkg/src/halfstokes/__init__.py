"""Spectral laboratory for maximal L1 regularity of half-space Stokes flow."""
from .grid_field import ExtensionPolicy, Field, Grid

__all__ = ["ExtensionPolicy", "Field", "Grid"]
__version__ = "0.1.0"
