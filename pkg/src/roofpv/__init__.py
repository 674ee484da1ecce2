"""Rooftop solar potential pipeline over raster elevation data."""

from .grids import (
    DegenerateGridError,
    GridError,
    HeightGrid,
    NormalField,
    ProbabilityGrid,
    compute_gradients,
    compute_normals,
    hillshade,
    sun_vector,
)
from .gridio import GridParseError, read_grid, write_grid

__all__ = [
    "DegenerateGridError",
    "GridError",
    "GridParseError",
    "HeightGrid",
    "NormalField",
    "ProbabilityGrid",
    "compute_gradients",
    "compute_normals",
    "hillshade",
    "read_grid",
    "sun_vector",
    "write_grid",
]

__version__ = "0.1.0"
