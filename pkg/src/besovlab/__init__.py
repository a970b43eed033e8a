"""Littlewood-Paley and Besov-space numerics on the periodic torus."""

from .fourier_field import Field, Grid, lp_norm

__version__ = "0.1.0"

__all__ = ["Field", "Grid", "lp_norm", "__version__"]
