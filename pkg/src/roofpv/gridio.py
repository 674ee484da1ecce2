"""Grid file reading/writing and PNG emission.

The grid file format is an ESRI-ASCII-style dialect: six header lines
(``ncols``, ``nrows``, ``xllcorner``, ``yllcorner``, ``cellsize``,
``NODATA_value``) followed by row-major whitespace-separated cell
values, northernmost row first.  Values are written with Python's
shortest round-trip float representation so that write -> read is
bit-exact.
"""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np

from .grids import GridError, HeightGrid, ProbabilityGrid

DEFAULT_NODATA = -9999.0

_HEADER_KEYS = ("ncols", "nrows", "xllcorner", "yllcorner", "cellsize", "nodata_value")


class GridParseError(GridError):
    """Malformed grid file; message carries row/column context."""


def write_grid(grid: HeightGrid, path, nodata_value: float = DEFAULT_NODATA) -> None:
    """Write a grid file; nodata cells are written as ``nodata_value``."""
    path = Path(path)
    vals = grid.values
    mask = grid.nodata_mask
    if np.any(vals[~mask] == nodata_value):
        raise GridError(
            f"grid contains the nodata sentinel {nodata_value} as a real value; "
            "pick a different nodata_value"
        )
    lines = [
        f"ncols {grid.width}",
        f"nrows {grid.height}",
        f"xllcorner {grid.origin[0]!r}",
        f"yllcorner {grid.origin[1]!r}",
        f"cellsize {grid.cell_size!r}",
        f"NODATA_value {nodata_value!r}",
    ]
    for r in range(grid.height):
        row = [
            repr(nodata_value) if mask[r, c] else repr(float(vals[r, c]))
            for c in range(grid.width)
        ]
        lines.append(" ".join(row))
    path.write_text("\n".join(lines) + "\n")


def read_grid(path) -> HeightGrid:
    """Parse a grid file written by :func:`write_grid` (or compatible)."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"grid file not found: {path}")
    tokens_by_line = [
        (lineno, line.split())
        for lineno, line in enumerate(path.read_text().splitlines(), start=1)
        if line.strip()
    ]
    header: dict[str, float] = {}
    body_start = 0
    for i, (lineno, toks) in enumerate(tokens_by_line):
        key = toks[0].lower()
        if key in _HEADER_KEYS:
            if len(toks) != 2:
                raise GridParseError(f"{path}:{lineno}: header line needs exactly one value")
            try:
                header[key] = float(toks[1])
            except ValueError as exc:
                raise GridParseError(f"{path}:{lineno}: non-numeric header value {toks[1]!r}") from exc
            body_start = i + 1
        else:
            break
    for key in ("ncols", "nrows", "xllcorner", "yllcorner", "cellsize"):
        if key not in header:
            raise GridParseError(f"{path}: missing header field {key!r}")
    ncols = int(header["ncols"])
    nrows = int(header["nrows"])
    if ncols <= 0 or nrows <= 0 or header["ncols"] != ncols or header["nrows"] != nrows:
        raise GridParseError(f"{path}: ncols/nrows must be positive integers")
    nodata_value = header.get("nodata_value", DEFAULT_NODATA)

    flat = np.empty(nrows * ncols, dtype=np.float64)
    count = 0
    for lineno, toks in tokens_by_line[body_start:]:
        for tok in toks:
            if count >= nrows * ncols:
                raise GridParseError(
                    f"{path}:{lineno}: too many cell values (expected {nrows * ncols})"
                )
            try:
                flat[count] = float(tok)
            except ValueError as exc:
                r, c = divmod(count, ncols)
                raise GridParseError(
                    f"{path}:{lineno}: non-numeric cell {tok!r} at row {r}, col {c}"
                ) from exc
            count += 1
    if count != nrows * ncols:
        r, c = divmod(count, ncols)
        raise GridParseError(
            f"{path}: got {count} cell values, expected {nrows * ncols} "
            f"(stops at row {r}, col {c})"
        )
    values = flat.reshape(nrows, ncols)
    mask = values == nodata_value
    values = np.where(mask, 0.0, values)
    return HeightGrid(
        values,
        cell_size=header["cellsize"],
        origin=(header["xllcorner"], header["yllcorner"]),
        nodata_mask=mask,
    )


def write_probability_grid(probs: ProbabilityGrid, path) -> None:
    write_grid(probs.as_height_grid(), path)


def read_probability_grid(path) -> ProbabilityGrid:
    g = read_grid(path)
    return ProbabilityGrid(np.where(g.nodata_mask, 0.0, g.values), g.cell_size, g.origin)


def write_label_grid(labels: np.ndarray, template: HeightGrid, path) -> None:
    """Write an integer label raster using the template's geometry."""
    write_grid(
        HeightGrid(labels.astype(np.float64), template.cell_size, template.origin), path
    )


def read_label_grid(path) -> tuple[np.ndarray, HeightGrid]:
    g = read_grid(path)
    labels = np.rint(g.values).astype(np.int32)
    return labels, g


def write_png(image: np.ndarray, path) -> None:
    """Write a uint8 grayscale (H, W) or RGB (H, W, 3) image."""
    from PIL import Image

    arr = np.asarray(image)
    if arr.dtype != np.uint8:
        raise ValueError(f"PNG writer expects uint8, got {arr.dtype}")
    os.makedirs(Path(path).parent, exist_ok=True)
    Image.fromarray(arr).save(Path(path))


def read_png(path) -> np.ndarray:
    from PIL import Image

    return np.asarray(Image.open(Path(path)))


def colorize(values: np.ndarray, vmin: float | None = None, vmax: float | None = None) -> np.ndarray:
    """Map a scalar raster to an RGB heat ramp (black-red-yellow-white)."""
    v = np.asarray(values, dtype=np.float64)
    lo = np.nanmin(v) if vmin is None else vmin
    hi = np.nanmax(v) if vmax is None else vmax
    if hi <= lo:
        hi = lo + 1.0
    t = np.clip((v - lo) / (hi - lo), 0.0, 1.0)
    t = np.where(np.isfinite(v), t, 0.0)
    r = np.clip(3.0 * t, 0.0, 1.0)
    g = np.clip(3.0 * t - 1.0, 0.0, 1.0)
    b = np.clip(3.0 * t - 2.0, 0.0, 1.0)
    return np.round(np.stack([r, g, b], axis=-1) * 255.0).astype(np.uint8)
