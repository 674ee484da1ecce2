"""Annual solar flux over a DSM via horizon sweeps.

The occlusion model is a per-cell, per-azimuth horizon field computed by
a sweep-line pass per direction: cells along each traversal line share a
convex-hull stack, giving amortized O(1) hull work per cell and total
work O(azimuth_count * n_cells).  Flux then integrates the weather
series per cell:

    flux = sum_t [ DNI * max(0, cos theta_inc) * visible + DHI * SVF ]
           * eta(temp, wind) * dt

where visibility tests the sun elevation against the horizon
interpolated at the sun azimuth, SVF is the isotropic cos^2 sky-view
factor, and eta is the temperature/wind efficiency correction.

Execution is tiled (core + margin); occluders beyond the margin are
ignored by design, so tiled and untiled runs agree whenever all
occluders sit inside the margins.  Tiles write disjoint core regions and
may run on any number of threads with identical results.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from numba import njit

from .grids import GridError, HeightGrid, NormalField
from .sun import sun_positions
from .weather import WeatherSeries


@dataclass(frozen=True)
class SiteConfig:
    latitude: float = 37.0
    longitude: float = -95.0
    tile_core: int = 256
    tile_margin: int = 48
    azimuth_count: int = 32
    time_step: float = 1.0  # hours; stride over the hourly weather records

    def __post_init__(self):
        if not -90.0 <= self.latitude <= 90.0:
            raise GridError(f"latitude out of range: {self.latitude}")
        if not -180.0 <= self.longitude <= 180.0:
            raise GridError(f"longitude out of range: {self.longitude}")
        if self.tile_core < 1 or self.tile_margin < 0:
            raise GridError("tile_core must be >= 1 and tile_margin >= 0")
        if self.azimuth_count < 8:
            raise GridError("azimuth_count must be >= 8")
        if self.time_step < 1.0:
            raise GridError("time_step must be >= 1 hour (weather is hourly)")


@dataclass(frozen=True)
class HorizonField:
    """Per-cell horizon elevation angles, one layer per azimuth (degrees)."""

    angles: np.ndarray    # (A, H, W) float32, values in [0, 90)
    azimuths: np.ndarray  # (A,) degrees, equally spaced from north, clockwise

    @property
    def azimuth_count(self) -> int:
        return len(self.azimuths)


@njit(cache=True, nogil=True)
def _sweep_lines(values, cell_size, slope, c_start, c_step, a_col, a_row, r_off, c_off, out):
    """Horizon sweep for one azimuth over column-major lines r = line + round(slope*c).

    Maintains the upper convex hull of (u, z) points already traversed on
    the line; each cell's horizon is the elevation angle to the hull
    vertex adjacent to it after the standard hull pops.

    ``r_off``/``c_off`` anchor the line rasterization and projections to
    global grid coordinates so that a cropped tile traverses exactly the
    same cell chains as the full grid (tiled == untiled by construction).
    """
    h, w = values.shape
    extra = int(np.ceil(abs(slope) * (w + abs(c_off)))) + abs(r_off) + 1
    hull_u = np.empty(w + 2, np.float64)
    hull_z = np.empty(w + 2, np.float64)
    for line in range(-extra, h + extra):
        top = 0
        for k in range(w):
            c = c_start + c_step * k
            cg = c + c_off
            r = line + int(np.round(slope * cg)) - r_off
            if r < 0 or r >= h:
                continue
            z = values[r, c]
            u = -(a_col * cg + a_row * (r + r_off)) * cell_size
            # pop hull points below the edge (second-top -> current)
            while top >= 2:
                cross = (hull_u[top - 1] - hull_u[top - 2]) * (z - hull_z[top - 1]) - (
                    hull_z[top - 1] - hull_z[top - 2]
                ) * (u - hull_u[top - 1])
                if cross >= 0.0:
                    top -= 1
                else:
                    break
            if top >= 1:
                ang = np.degrees(np.arctan2(hull_z[top - 1] - z, u - hull_u[top - 1]))
                out[r, c] = ang if ang > 0.0 else 0.0
            else:
                out[r, c] = 0.0
            hull_u[top] = u
            hull_z[top] = z
            top += 1


def _horizon_one_azimuth(
    values: np.ndarray,
    cell_size: float,
    azimuth_deg: float,
    offset: tuple[int, int] = (0, 0),
) -> np.ndarray:
    az = np.radians(azimuth_deg)
    dc = np.sin(az)   # column component of the look direction (east)
    dr = -np.cos(az)  # row component (north = decreasing row)
    r_off, c_off = offset
    out = np.empty_like(values)
    if abs(dc) >= abs(dr):
        slope = dr / dc
        c_start, c_step = (values.shape[1] - 1, -1) if dc > 0 else (0, 1)
        _sweep_lines(values, cell_size, slope, c_start, c_step, dc, dr, r_off, c_off, out)
    else:
        # transpose: swap row/col roles so the sweep is column-major again
        slope = dc / dr
        c_start, c_step = (values.shape[0] - 1, -1) if dr > 0 else (0, 1)
        out_t = np.empty_like(values.T)
        _sweep_lines(np.ascontiguousarray(values.T), cell_size, slope,
                     c_start, c_step, dr, dc, c_off, r_off, out_t)
        out = np.ascontiguousarray(out_t.T)
    return out


def compute_horizons(dsm: HeightGrid, azimuth_count: int = 32) -> HorizonField:
    """Horizon field over the whole grid (no tiling)."""
    if azimuth_count < 8:
        raise GridError("azimuth_count must be >= 8")
    azimuths = np.arange(azimuth_count) * (360.0 / azimuth_count)
    angles = np.empty((azimuth_count, *dsm.shape), dtype=np.float32)
    for k, az in enumerate(azimuths):
        angles[k] = _horizon_one_azimuth(dsm.values, dsm.cell_size, float(az))
    return HorizonField(angles, azimuths)


def compute_horizons_tiled(
    dsm: HeightGrid,
    site: SiteConfig,
    jobs: int = 1,
) -> HorizonField:
    """Tile-parallel horizon field: cores of ``tile_core`` cells padded by
    ``tile_margin`` occluder context on every side."""
    h, w = dsm.shape
    core = site.tile_core
    margin = site.tile_margin
    if core >= max(h, w) and margin >= 0 and core >= h and core >= w:
        return compute_horizons(dsm, site.azimuth_count)
    azimuths = np.arange(site.azimuth_count) * (360.0 / site.azimuth_count)
    angles = np.empty((site.azimuth_count, h, w), dtype=np.float32)

    tiles = []
    for r0 in range(0, h, core):
        for c0 in range(0, w, core):
            r1, c1 = min(h, r0 + core), min(w, c0 + core)
            rr0, cc0 = max(0, r0 - margin), max(0, c0 - margin)
            rr1, cc1 = min(h, r1 + margin), min(w, c1 + margin)
            tiles.append((r0, r1, c0, c1, rr0, rr1, cc0, cc1))

    def run_tile(t):
        r0, r1, c0, c1, rr0, rr1, cc0, cc1 = t
        sub = np.ascontiguousarray(dsm.values[rr0:rr1, cc0:cc1])
        for k, az in enumerate(azimuths):
            full = _horizon_one_azimuth(sub, dsm.cell_size, float(az), offset=(rr0, cc0))
            angles[k, r0:r1, c0:c1] = full[r0 - rr0:r1 - rr0, c0 - cc0:c1 - cc0]

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            list(pool.map(run_tile, tiles))
    else:
        for t in tiles:
            run_tile(t)
    return HorizonField(angles, azimuths)


def sky_view_factor(horizons: HorizonField) -> np.ndarray:
    """Isotropic-sky estimate: cos^2(horizon angle), per azimuth layer."""
    return np.cos(np.radians(horizons.angles.astype(np.float64))) ** 2


def sky_view_factor_grid(horizons: HorizonField) -> np.ndarray:
    """Mean cos^2 over azimuths, accumulated layer by layer (cache friendly)."""
    out = np.zeros(horizons.angles.shape[1:], dtype=np.float64)
    for k in range(horizons.azimuth_count):
        layer = np.radians(horizons.angles[k].astype(np.float64))
        np.cos(layer, out=layer)
        out += layer * layer
    out /= horizons.azimuth_count
    return out


def temperature_correction(
    air_temp,
    wind_speed,
    a: float = 25.0,
    b: float = 6.84,
    gamma: float = -0.0045,
    clamp: tuple[float, float] = (0.5, 1.1),
):
    """Panel efficiency factor from air temperature and wind cooling.

    Module temperature proxy: T_mod = air_temp + a / (1 + b * wind);
    factor = 1 + gamma * (T_mod - 25), clamped.  Defaults approximate
    typical silicon behavior; all coefficients are configurable.
    """
    t_mod = np.asarray(air_temp, dtype=np.float64) + a / (
        1.0 + b * np.asarray(wind_speed, dtype=np.float64)
    )
    return np.clip(1.0 + gamma * (t_mod - 25.0), clamp[0], clamp[1])


def _horizon_at_azimuth(horizons: HorizonField, azimuth_deg: float) -> np.ndarray:
    """Linear interpolation between the two nearest horizon azimuths."""
    a = horizons.azimuth_count
    step = 360.0 / a
    pos = (azimuth_deg % 360.0) / step
    k0 = int(np.floor(pos)) % a
    k1 = (k0 + 1) % a
    w1 = pos - np.floor(pos)
    return (1.0 - w1) * horizons.angles[k0] + w1 * horizons.angles[k1]


@njit(cache=True, nogil=True)
def _accumulate_flux(angles, svf, nx, ny, nz, dni, dhi, eta, sun_az, sun_el, dt_hours, out):
    """Single-pass time integration: one streaming sweep per record.

    Fuses horizon interpolation, the visibility test, the incidence
    cosine and the accumulation so no per-hour temporaries are allocated.
    """
    a = angles.shape[0]
    h, w = svf.shape
    step = 360.0 / a
    for i in range(dni.shape[0]):
        if dni[i] <= 0.0 and dhi[i] <= 0.0:
            continue
        scale = eta[i] * dt_hours
        direct = dni[i] > 0.0 and sun_el[i] > 0.0
        sx = sy = sz = 0.0
        k0 = k1 = 0
        w1 = 0.0
        if direct:
            azr = np.radians(sun_az[i])
            elr = np.radians(sun_el[i])
            sx = np.sin(azr) * np.cos(elr)
            sy = np.cos(azr) * np.cos(elr)
            sz = np.sin(elr)
            pos = (sun_az[i] % 360.0) / step
            k0 = int(np.floor(pos)) % a
            k1 = (k0 + 1) % a
            w1 = pos - np.floor(pos)
        for r in range(h):
            for c in range(w):
                v = dhi[i] * svf[r, c]
                if direct:
                    hz = (1.0 - w1) * angles[k0, r, c] + w1 * angles[k1, r, c]
                    if sun_el[i] > hz:
                        ci = nx[r, c] * sx + ny[r, c] * sy + nz[r, c] * sz
                        if ci > 0.0:
                            v += dni[i] * ci
                out[r, c] += v * scale


def flux_map(
    dsm: HeightGrid,
    normals: NormalField,
    weather: WeatherSeries,
    site: SiteConfig,
    horizons: HorizonField | None = None,
    jobs: int = 1,
) -> HeightGrid:
    """Annual irradiation per cell in kWh/m^2 (FluxGrid on the DSM geometry)."""
    if normals.shape != dsm.shape:
        raise GridError("normals and dsm must share geometry")
    weather.require_hourly()
    if horizons is None:
        horizons = compute_horizons_tiled(dsm, site, jobs=jobs)
    if horizons.angles.shape[1:] != dsm.shape:
        raise GridError("horizon field does not match the dsm geometry")

    svf = sky_view_factor_grid(horizons)
    stride = max(1, int(round(site.time_step)))
    idx = np.arange(0, len(weather), stride)
    dt_hours = float(stride)
    az, el = sun_positions(site.latitude, site.longitude, weather.timestamps[idx])
    eta = temperature_correction(weather.air_temp[idx], weather.wind_speed[idx])

    flux_wh = np.zeros(dsm.shape, dtype=np.float64)
    _accumulate_flux(
        horizons.angles, svf,
        np.ascontiguousarray(normals.nx),
        np.ascontiguousarray(normals.ny),
        np.ascontiguousarray(normals.nz),
        np.ascontiguousarray(weather.dni[idx]),
        np.ascontiguousarray(weather.dhi[idx]),
        np.ascontiguousarray(eta, dtype=np.float64),
        np.ascontiguousarray(az),
        np.ascontiguousarray(el),
        dt_hours,
        flux_wh,
    )
    flux_wh = np.where(normals.nodata_mask, 0.0, np.nan_to_num(flux_wh))
    return dsm.with_values(flux_wh / 1000.0)
