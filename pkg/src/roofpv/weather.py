"""Hourly weather series (DNI/DHI/temperature/wind) and its CSV format.

CSV schema: header ``timestamp,dni,dhi,temp,wind``; ISO-8601 UTC
timestamps, one row per hour.  A clear-sky synthesizer provides
deterministic series for tests and synthetic pipelines.
"""

from __future__ import annotations

import csv
import datetime as dt
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .sun import sun_positions

CSV_HEADER = ["timestamp", "dni", "dhi", "temp", "wind"]


class WeatherError(ValueError):
    pass


@dataclass(frozen=True)
class WeatherSeries:
    timestamps: np.ndarray  # datetime64[s], UTC
    dni: np.ndarray         # W/m^2
    dhi: np.ndarray         # W/m^2
    air_temp: np.ndarray    # deg C
    wind_speed: np.ndarray  # m/s

    def __post_init__(self):
        ts = np.asarray(self.timestamps, dtype="datetime64[s]")
        object.__setattr__(self, "timestamps", ts)
        for name in ("dni", "dhi", "air_temp", "wind_speed"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if arr.shape != ts.shape:
                raise WeatherError(f"{name} length {arr.shape} != timestamps {ts.shape}")
            if not np.all(np.isfinite(arr)):
                raise WeatherError(f"{name} contains non-finite values")
            object.__setattr__(self, name, arr)
        if len(ts) == 0:
            raise WeatherError("weather series is empty")
        if np.any(self.dni < 0) or np.any(self.dhi < 0):
            raise WeatherError("dni and dhi must be >= 0")
        if len(ts) > 1:
            deltas = np.diff(ts) / np.timedelta64(1, "s")
            if np.any(deltas <= 0):
                raise WeatherError("timestamps must be strictly increasing")

    def __len__(self) -> int:
        return len(self.timestamps)

    def require_hourly(self) -> None:
        """Raise listing the missing hours if the series has gaps."""
        deltas = np.diff(self.timestamps) / np.timedelta64(1, "h")
        bad = np.nonzero(deltas != 1.0)[0]
        if len(bad):
            missing = []
            for i in bad[:5]:
                t0 = self.timestamps[i]
                n = int(deltas[i]) - 1
                missing.extend(str(t0 + np.timedelta64(k + 1, "h")) for k in range(min(n, 5)))
            raise WeatherError(f"weather series has gaps; missing hours include {missing}")

    def require_full_year(self) -> None:
        self.require_hourly()
        if len(self) not in (8760, 8784):
            raise WeatherError(
                f"full-year series must have 8760 or 8784 hourly records, got {len(self)}"
            )


def write_weather_csv(series: WeatherSeries, path) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_HEADER)
        for i in range(len(series)):
            iso = str(series.timestamps[i]) + "Z"
            w.writerow([
                iso,
                repr(float(series.dni[i])),
                repr(float(series.dhi[i])),
                repr(float(series.air_temp[i])),
                repr(float(series.wind_speed[i])),
            ])


def read_weather_csv(path) -> WeatherSeries:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"weather file not found: {path}")
    rows = []
    with path.open() as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip().lower() for h in header] != CSV_HEADER:
            raise WeatherError(f"{path}: expected header {','.join(CSV_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 5:
                raise WeatherError(f"{path}:{lineno}: expected 5 fields, got {len(row)}")
            try:
                ts = dt.datetime.fromisoformat(row[0].replace("Z", "+00:00"))
                if ts.tzinfo is not None:
                    ts = ts.astimezone(dt.timezone.utc).replace(tzinfo=None)
                rows.append((np.datetime64(ts, "s"), *(float(v) for v in row[1:])))
            except ValueError as exc:
                raise WeatherError(f"{path}:{lineno}: {exc}") from exc
    if not rows:
        raise WeatherError(f"{path}: no data rows")
    cols = list(zip(*rows))
    return WeatherSeries(
        np.array(cols[0], dtype="datetime64[s]"),
        np.array(cols[1]), np.array(cols[2]), np.array(cols[3]), np.array(cols[4]),
    )


def clear_sky_weather(latitude: float, longitude: float, year: int = 2021) -> WeatherSeries:
    """Deterministic clear-sky year: simple air-mass DNI, proportional DHI,
    seasonal/diurnal temperature, gentle wind cycle."""
    start = np.datetime64(f"{year}-01-01T00:00:00", "s")
    end = np.datetime64(f"{year + 1}-01-01T00:00:00", "s")
    n = int((end - start) / np.timedelta64(1, "h"))
    ts = start + np.arange(n) * np.timedelta64(1, "h")
    _, el = sun_positions(latitude, longitude, ts)
    sin_el = np.sin(np.radians(np.maximum(el, 0.0)))
    up = el > 0.5
    dni = np.where(up, 950.0 * np.exp(-0.13 / np.maximum(sin_el, 0.02)), 0.0)
    dhi = np.where(up, 110.0 * sin_el, 0.0)
    hours = np.arange(n) % 24
    doy = np.arange(n) / 24.0
    seasonal = -np.cos(2 * np.pi * (doy - 15) / 365.0)
    if latitude < 0:
        seasonal = -seasonal
    temp = 12.0 + 10.0 * seasonal + 6.0 * np.sin(2 * np.pi * (hours - 9) / 24.0)
    wind = 2.5 + 1.5 * np.sin(2 * np.pi * (hours - 3) / 24.0) + 0.5 * seasonal
    return WeatherSeries(ts, dni, dhi, temp, np.maximum(wind, 0.0))
