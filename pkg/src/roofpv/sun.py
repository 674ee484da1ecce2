"""Solar geometry: declination + equation of time + hour angle.

Uses the Julian-century ephemeris recipe of the published NOAA solar
calculator (geometric mean longitude/anomaly, equation of center,
apparent longitude, corrected obliquity).  Accuracy is a couple of
hundredths of a degree over the satellite era, comfortably inside the
0.5 deg target for annual energy work.  No refraction or parallax.

All angles in degrees; azimuth is compass convention (0 = north,
clockwise); timestamps are UTC.
"""

from __future__ import annotations

import datetime as dt

import numpy as np


def _position_from_jd(latitude, longitude, jd):
    jc = (jd - 2451545.0) / 36525.0
    l0 = (280.46646 + jc * (36000.76983 + 0.0003032 * jc)) % 360.0
    m = np.radians(357.52911 + jc * (35999.05029 - 0.0001537 * jc))
    ecc = 0.016708634 - jc * (0.000042037 + 0.0000001267 * jc)
    eq_ctr = (
        np.sin(m) * (1.914602 - jc * (0.004817 + 0.000014 * jc))
        + np.sin(2 * m) * (0.019993 - 0.000101 * jc)
        + np.sin(3 * m) * 0.000289
    )
    omega = np.radians(125.04 - 1934.136 * jc)
    app_long = np.radians(l0 + eq_ctr - 0.00569 - 0.00478 * np.sin(omega))
    mean_obliq = 23.0 + (26.0 + (21.448 - jc * (46.815 + jc * (0.00059 - jc * 0.001813))) / 60.0) / 60.0
    obliq = np.radians(mean_obliq + 0.00256 * np.cos(omega))
    decl = np.arcsin(np.sin(obliq) * np.sin(app_long))
    var_y = np.tan(obliq / 2.0) ** 2
    l0r = np.radians(l0)
    eqtime = 4.0 * np.degrees(
        var_y * np.sin(2 * l0r)
        - 2.0 * ecc * np.sin(m)
        + 4.0 * ecc * var_y * np.sin(m) * np.cos(2 * l0r)
        - 0.5 * var_y**2 * np.sin(4 * l0r)
        - 1.25 * ecc**2 * np.sin(2 * m)
    )
    frac_day = (jd + 0.5) % 1.0  # UTC day fraction
    tst = (frac_day * 1440.0 + eqtime + 4.0 * longitude) % 1440.0
    ha = np.radians(tst / 4.0 - 180.0)
    lat = np.radians(latitude)
    sin_el = np.sin(lat) * np.sin(decl) + np.cos(lat) * np.cos(decl) * np.cos(ha)
    elevation = np.degrees(np.arcsin(np.clip(sin_el, -1.0, 1.0)))
    azimuth = np.degrees(np.arctan2(
        np.sin(ha),
        np.cos(ha) * np.sin(lat) - np.tan(decl) * np.cos(lat),
    )) + 180.0
    return azimuth % 360.0, elevation


def sun_position(latitude: float, longitude: float, when: dt.datetime) -> tuple[float, float]:
    """(azimuth_deg, elevation_deg) of the sun for one UTC datetime."""
    if not -90.0 <= latitude <= 90.0:
        raise ValueError(f"latitude out of range: {latitude}")
    if when.tzinfo is not None:
        when = when.astimezone(dt.timezone.utc).replace(tzinfo=None)
    frac = (when.hour + when.minute / 60.0 + when.second / 3600.0) / 24.0
    jd = when.toordinal() + 1721424.5 + frac
    az, el = _position_from_jd(latitude, longitude, jd)
    return float(az), float(el)


def sun_positions(latitude: float, longitude: float, timestamps: np.ndarray):
    """Vectorized positions for a datetime64 array; returns (azimuths, elevations)."""
    if not -90.0 <= latitude <= 90.0:
        raise ValueError(f"latitude out of range: {latitude}")
    ts = np.asarray(timestamps, dtype="datetime64[s]")
    unix = ts.astype(np.int64).astype(np.float64)
    jd = unix / 86400.0 + 2440587.5
    return _position_from_jd(latitude, longitude, jd)
