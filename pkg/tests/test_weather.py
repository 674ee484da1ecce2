"""Weather series validation, CSV round-trip, clear-sky generator."""

import numpy as np
import pytest

from roofpv.weather import (
    WeatherError,
    WeatherSeries,
    clear_sky_weather,
    read_weather_csv,
    write_weather_csv,
)


def small_series(n=5, start="2021-06-01T00:00:00"):
    ts = np.datetime64(start, "s") + np.arange(n) * np.timedelta64(1, "h")
    return WeatherSeries(ts, np.full(n, 500.0), np.full(n, 80.0),
                         np.full(n, 20.0), np.full(n, 3.0))


def test_csv_round_trip(tmp_path):
    s = small_series(8)
    p = tmp_path / "w.csv"
    write_weather_csv(s, p)
    back = read_weather_csv(p)
    assert np.array_equal(back.timestamps, s.timestamps)
    assert np.array_equal(back.dni, s.dni)
    assert np.array_equal(back.wind_speed, s.wind_speed)


def test_header_validated(tmp_path):
    p = tmp_path / "w.csv"
    p.write_text("time,dni,dhi,temp,wind\n2021-01-01T00:00:00Z,1,2,3,4\n")
    with pytest.raises(WeatherError, match="header"):
        read_weather_csv(p)


def test_negative_irradiance_rejected():
    ts = np.datetime64("2021-01-01T00:00:00", "s") + np.arange(3) * np.timedelta64(1, "h")
    with pytest.raises(WeatherError):
        WeatherSeries(ts, np.array([1.0, -2.0, 3.0]), np.zeros(3), np.zeros(3), np.zeros(3))


def test_non_increasing_timestamps_rejected():
    ts = np.array(["2021-01-01T01:00:00", "2021-01-01T00:00:00"], dtype="datetime64[s]")
    with pytest.raises(WeatherError):
        WeatherSeries(ts, np.zeros(2), np.zeros(2), np.zeros(2), np.zeros(2))


def test_gap_detection_lists_missing_hours():
    ts = np.array(
        ["2021-01-01T00:00:00", "2021-01-01T01:00:00", "2021-01-01T04:00:00"],
        dtype="datetime64[s]",
    )
    s = WeatherSeries(ts, np.zeros(3), np.zeros(3), np.zeros(3), np.zeros(3))
    with pytest.raises(WeatherError, match="2021-01-01T02:00:00"):
        s.require_hourly()


def test_clear_sky_year_is_valid_and_plausible():
    w = clear_sky_weather(37.0, -95.0, 2021)
    w.require_full_year()
    assert len(w) == 8760
    assert np.all(w.dni >= 0) and np.all(w.dhi >= 0)
    assert w.dni.max() > 500.0  # real daytime sun
    night = w.dni == 0.0
    assert night.sum() > 3000  # nights exist
    # deterministic
    w2 = clear_sky_weather(37.0, -95.0, 2021)
    assert np.array_equal(w.dni, w2.dni) and np.array_equal(w.air_temp, w2.air_temp)


def test_leap_year_has_8784_records():
    w = clear_sky_weather(10.0, 10.0, 2020)
    assert len(w) == 8784
    w.require_full_year()
