"""Grid file round-trip and parse-error tests."""

import numpy as np
import pytest

from roofpv.grids import HeightGrid
from roofpv.gridio import GridParseError, read_grid, write_grid


def test_round_trip_bit_exact(tmp_path):
    rng = np.random.default_rng(5)
    vals = rng.normal(scale=100.0, size=(7, 5))
    g = HeightGrid(vals, cell_size=0.25, origin=(123.5, -77.125))
    p = tmp_path / "g.asc"
    write_grid(g, p)
    back = read_grid(p)
    assert back.values.tobytes() == g.values.tobytes()
    assert back.cell_size == g.cell_size
    assert back.origin == g.origin
    assert not back.nodata_mask.any()


def test_write_read_write_is_byte_identical(tmp_path):
    rng = np.random.default_rng(6)
    g = HeightGrid(rng.normal(size=(4, 6)), 1.0, (0.0, 0.0))
    p1, p2 = tmp_path / "a.asc", tmp_path / "b.asc"
    write_grid(g, p1)
    write_grid(read_grid(p1), p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_nodata_mask_round_trips(tmp_path):
    mask = np.array([[False, True], [False, False]])
    g = HeightGrid(np.array([[1.5, 0.0], [2.5, -3.5]]), 1.0, (0, 0), mask)
    p = tmp_path / "m.asc"
    write_grid(g, p)
    back = read_grid(p)
    assert np.array_equal(back.nodata_mask, mask)
    assert np.array_equal(back.values[~mask], g.values[~mask])


def test_value_count_shortfall_names_position(tmp_path):
    p = tmp_path / "bad.asc"
    p.write_text(
        "ncols 3\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 1\nNODATA_value -9999\n"
        "1 2 3\n4 5\n"
    )
    with pytest.raises(GridParseError, match="got 5 cell values, expected 6"):
        read_grid(p)


def test_non_numeric_cell_names_row_col(tmp_path):
    p = tmp_path / "bad.asc"
    p.write_text(
        "ncols 2\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 1\nNODATA_value -9999\n"
        "1 2\n3 oops\n"
    )
    with pytest.raises(GridParseError, match="row 1, col 1"):
        read_grid(p)


def test_missing_header_field(tmp_path):
    p = tmp_path / "bad.asc"
    p.write_text("ncols 2\nnrows 2\nxllcorner 0\ncellsize 1\n1 2\n3 4\n")
    with pytest.raises(GridParseError, match="yllcorner"):
        read_grid(p)


def test_too_many_values_rejected(tmp_path):
    p = tmp_path / "bad.asc"
    p.write_text(
        "ncols 2\nnrows 1\nxllcorner 0\nyllcorner 0\ncellsize 1\nNODATA_value -9999\n"
        "1 2 3\n"
    )
    with pytest.raises(GridParseError, match="too many"):
        read_grid(p)


def test_missing_file():
    with pytest.raises(FileNotFoundError):
        read_grid("/nonexistent/nowhere.asc")


def test_exhaustive_decimal_round_trip(tmp_path):
    # every finite value representable at this decimal precision survives
    vals = np.array([[0.1, -0.3, 1e-17], [1e17, 123.456789012345, -0.0]])
    g = HeightGrid(vals, 1.0, (0, 0))
    p = tmp_path / "d.asc"
    write_grid(g, p)
    assert read_grid(p).values.tobytes() == vals.tobytes()
