"""Raster grid data model and surface math.

Axis convention, used by every module in this package: row 0 is the
northern edge of the grid and the row index increases southward; the
column index increases eastward.  World coordinates are local planar
meters with x pointing east, y pointing north and z up.  ``origin`` is
the (x, y) of the grid's lower-left (south-west) corner, matching the
``xllcorner``/``yllcorner`` header fields of the grid file format.

Grids are immutable after construction: all operations return new
arrays/grids and are safe to call concurrently on shared instances.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage


class GridError(ValueError):
    """Invalid grid construction or incompatible grid geometry."""


class DegenerateGridError(GridError):
    """Grid has too few usable cells for the requested operation."""


def _as_float_array(values) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 2:
        raise GridError(f"grid values must be 2-D, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class HeightGrid:
    """2-D raster of elevations in meters.

    ``values[r, c]`` is the elevation at row r / column c; ``nodata_mask``
    is True where no elevation is known.  Nodata cells hold an arbitrary
    finite placeholder in ``values`` and must never be interpreted.
    """

    values: np.ndarray
    cell_size: float
    origin: tuple[float, float] = (0.0, 0.0)
    nodata_mask: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        arr = _as_float_array(self.values)
        object.__setattr__(self, "values", arr)
        if self.cell_size <= 0:
            raise GridError(f"cell_size must be > 0, got {self.cell_size}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise GridError(f"grid must be at least 1x1, got {arr.shape}")
        mask = self.nodata_mask
        if mask is None:
            mask = np.zeros(arr.shape, dtype=bool)
        else:
            mask = np.asarray(mask, dtype=bool)
            if mask.shape != arr.shape:
                raise GridError(
                    f"nodata_mask shape {mask.shape} != values shape {arr.shape}"
                )
        object.__setattr__(self, "nodata_mask", mask)
        if not np.all(np.isfinite(arr[~mask])):
            raise GridError("non-nodata grid values must be finite")
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))

    @property
    def height(self) -> int:
        """Number of rows."""
        return self.values.shape[0]

    @property
    def width(self) -> int:
        """Number of columns."""
        return self.values.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def same_geometry(self, other: "HeightGrid") -> bool:
        return (
            self.shape == other.shape
            and self.cell_size == other.cell_size
            and self.origin == other.origin
        )

    def require_same_geometry(self, other: "HeightGrid", what: str = "grid") -> None:
        if not self.same_geometry(other):
            raise GridError(
                f"{what} geometry mismatch: {self.shape}@{self.cell_size} vs "
                f"{other.shape}@{other.cell_size}"
            )

    def with_values(self, values, nodata_mask=None) -> "HeightGrid":
        """New grid on the same geometry with different cell values."""
        mask = self.nodata_mask if nodata_mask is None else nodata_mask
        return HeightGrid(values, self.cell_size, self.origin, np.array(mask, copy=True))

    def cell_x(self, col) -> np.ndarray:
        """World x (east) of cell centers for the given column index array."""
        return self.origin[0] + (np.asarray(col, dtype=np.float64) + 0.5) * self.cell_size

    def cell_y(self, row) -> np.ndarray:
        """World y (north) of cell centers; row 0 is the northern edge."""
        return self.origin[1] + (self.height - np.asarray(row, dtype=np.float64) - 0.5) * self.cell_size

    def cell_points(self, rows, cols) -> np.ndarray:
        """(N, 3) world points of cell centers at the grid surface."""
        rows = np.asarray(rows)
        cols = np.asarray(cols)
        return np.column_stack(
            [self.cell_x(cols), self.cell_y(rows), self.values[rows, cols]]
        )


@dataclass(frozen=True)
class ProbabilityGrid:
    """Per-cell probability raster sharing HeightGrid geometry; values in [0, 1]."""

    values: np.ndarray
    cell_size: float
    origin: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        arr = np.clip(_as_float_array(self.values), 0.0, 1.0)
        object.__setattr__(self, "values", arr)
        if self.cell_size <= 0:
            raise GridError(f"cell_size must be > 0, got {self.cell_size}")
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def as_height_grid(self) -> HeightGrid:
        return HeightGrid(self.values, self.cell_size, self.origin)


@dataclass(frozen=True)
class NormalField:
    """Per-cell outward (upward) unit normals; NaN components at nodata cells."""

    nx: np.ndarray
    ny: np.ndarray
    nz: np.ndarray
    nodata_mask: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return self.nx.shape

    def vectors(self) -> np.ndarray:
        """(H, W, 3) stacked normal components."""
        return np.stack([self.nx, self.ny, self.nz], axis=-1)


def _box_smooth(values: np.ndarray, radius: int) -> np.ndarray:
    """Separable box average with replicated borders.

    Direct convolution so that NaN placeholders contaminate exactly the
    windows that touch them (nodata propagation).
    """
    if radius == 0:
        return values
    k = np.full(2 * radius + 1, 1.0 / (2 * radius + 1))
    out = ndimage.convolve1d(values, k, axis=0, mode="nearest")
    out = ndimage.convolve1d(out, k, axis=1, mode="nearest")
    return out


def compute_gradients(grid: HeightGrid, smoothing_radius: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Cell-size-normalized surface gradients (d h / d east, d h / d north).

    Box smoothing of the given radius is applied first; differences are
    central in the interior and one-sided at borders.  Any stencil that
    touches a nodata cell yields NaN.
    """
    if smoothing_radius < 0:
        raise GridError(f"smoothing_radius must be >= 0, got {smoothing_radius}")
    valid = ~grid.nodata_mask
    if valid.sum() < 4 or grid.height < 2 or grid.width < 2:
        raise DegenerateGridError("gradient needs at least a 2x2 block of usable cells")
    work = np.where(valid, grid.values, np.nan)
    work = _box_smooth(work, smoothing_radius)
    gx = np.gradient(work, grid.cell_size, axis=1)
    # Row index increases southward, so the north gradient is the negated row gradient.
    gy = -np.gradient(work, grid.cell_size, axis=0)
    # a nodata cell is itself part of the stencil even when the central
    # difference skips the center value
    gx[~valid] = np.nan
    gy[~valid] = np.nan
    return gx, gy


def compute_normals(
    grid: HeightGrid,
    smoothing_radius: int = 1,
    gy_sign: float = -1.0,
) -> NormalField:
    """Outward unit normals from smoothed gradients.

    The default builds n ~ [-gx, -gy, 1] for gradients expressed along
    east/north axes ("z up, x east, y north").  ``gy_sign=+1.0`` selects
    the alternate convention n ~ [-gx, +gy, 1], which is equivalent to
    taking the y gradient in row order (rows increase southward).
    """
    if gy_sign not in (-1.0, 1.0):
        raise GridError(f"gy_sign must be -1.0 or +1.0, got {gy_sign}")
    gx, gy = compute_gradients(grid, smoothing_radius)
    nx = -gx
    ny = gy_sign * gy
    nz = np.ones_like(gx)
    norm = np.sqrt(nx * nx + ny * ny + 1.0)
    bad = ~np.isfinite(norm)
    norm = np.where(bad, 1.0, norm)
    out_mask = grid.nodata_mask | bad
    return NormalField(
        nx=np.where(out_mask, np.nan, nx / norm),
        ny=np.where(out_mask, np.nan, ny / norm),
        nz=np.where(out_mask, np.nan, nz / norm),
        nodata_mask=out_mask,
    )


def sun_vector(azimuth_deg: float, elevation_deg: float) -> np.ndarray:
    """Unit vector toward the sun in (east, north, up) coordinates.

    Azimuth is compass degrees (0 = north, 90 = east, clockwise).
    """
    az = np.radians(azimuth_deg)
    el = np.radians(elevation_deg)
    return np.array([np.sin(az) * np.cos(el), np.cos(az) * np.cos(el), np.sin(el)])


def hillshade(
    grid: HeightGrid,
    sun_azimuth: float = 315.0,
    sun_elevation: float = 45.0,
    smoothing_radius: int = 1,
) -> np.ndarray:
    """Lambertian relief rendering: round(255 * max(0, n . s)) as uint8.

    Nodata cells render black.
    """
    if not 0.0 < sun_elevation <= 90.0:
        raise GridError(f"sun_elevation must be in (0, 90], got {sun_elevation}")
    normals = compute_normals(grid, smoothing_radius)
    s = sun_vector(sun_azimuth, sun_elevation)
    shade = normals.nx * s[0] + normals.ny * s[1] + normals.nz * s[2]
    shade = np.clip(shade, 0.0, 1.0)
    shade = np.where(normals.nodata_mask, 0.0, shade)
    # quantize via float32 so half-integer boundaries are stable under
    # sub-ulp trig noise (sin 30 deg lands exactly on x.5)
    return np.round((shade * 255.0).astype(np.float32)).astype(np.uint8)
