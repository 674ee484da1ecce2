"""Deterministic procedural scene generator and degradation model.

Produces paired ground truth for the pipeline: a high-quality DSM, bare
terrain (DTM), building footprints, per-building planar roof truth,
building probabilities, and a pseudo-RGB render.  ``degrade`` turns the
high-quality layers into simulated low-quality inputs (blur, resolution
loss, registration jitter, elevation noise, foliage change).

All randomness flows through one ``numpy.random.default_rng`` stream per
call, so a fixed seed reproduces a scene bit-exactly.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .grids import HeightGrid, ProbabilityGrid, hillshade
from . import gridio

logger = logging.getLogger(__name__)

ROOF_STYLES = ("flat", "gabled", "hipped", "shed")

SCENE_SCHEMA_VERSION = 1


class SceneGenerationError(RuntimeError):
    """Requested scene cannot be placed (extent too small, etc.)."""


@dataclass(frozen=True)
class SceneSpec:
    rng_seed: int = 0
    extent: int = 96
    cell_size: float = 0.5
    building_count: int = 3
    roof_styles: tuple[str, ...] = ROOF_STYLES
    tree_count: int = 4
    obstacle_density: float = 1.0
    terrain_amplitude: float = 1.0
    keep_trees_off_buildings: bool = False

    def __post_init__(self):
        if self.extent <= 0 or self.cell_size <= 0:
            raise SceneGenerationError("extent and cell_size must be positive")
        if min(self.building_count, self.tree_count) < 0 or self.obstacle_density < 0:
            raise SceneGenerationError("counts must be >= 0")
        if self.terrain_amplitude < 0:
            raise SceneGenerationError("terrain_amplitude must be >= 0")
        bad = set(self.roof_styles) - set(ROOF_STYLES)
        if bad or not self.roof_styles:
            raise SceneGenerationError(f"unknown roof styles: {sorted(bad)}")


@dataclass(frozen=True)
class TruthPlane:
    """One planar roof facet: n . x = offset over the listed cells."""

    plane_id: int
    building_id: int
    normal: np.ndarray
    offset: float
    cells: np.ndarray  # (N, 2) row/col indices


@dataclass
class Scene:
    spec: SceneSpec
    dsm_hq: HeightGrid
    dtm: HeightGrid
    footprints_truth: np.ndarray
    probabilities_hq: ProbabilityGrid
    roof_planes_truth: dict[int, list[TruthPlane]]
    pseudo_rgb: np.ndarray

    @property
    def building_ids(self) -> list[int]:
        return sorted(self.roof_planes_truth)


@dataclass(frozen=True)
class DegradeParams:
    downsample_factor: int = 2
    gaussian_blur_sigma: float = 1.0
    noise_sigma: float = 0.15
    registration_jitter: float = 0.5
    foliage_change_probability: float = 0.0

    def __post_init__(self):
        if self.downsample_factor < 1:
            raise ValueError("downsample_factor must be >= 1")
        if min(self.gaussian_blur_sigma, self.noise_sigma, self.registration_jitter) < 0:
            raise ValueError("sigmas and jitter must be >= 0")
        if not 0.0 <= self.foliage_change_probability <= 1.0:
            raise ValueError("foliage_change_probability must be in [0, 1]")


def _smooth_terrain(rng: np.random.Generator, extent: int, amplitude: float) -> np.ndarray:
    coarse_n = max(3, extent // 16)
    coarse = rng.normal(size=(coarse_n, coarse_n))
    coords = np.linspace(0.0, coarse_n - 1.0, extent)
    rr, cc = np.meshgrid(coords, coords, indexing="ij")
    terrain = ndimage.map_coordinates(coarse, [rr, cc], order=3, mode="nearest")
    terrain = ndimage.gaussian_filter(terrain, sigma=2.0, mode="nearest")
    span = terrain.max() - terrain.min()
    if span > 0 and amplitude > 0:
        terrain = (terrain - terrain.min()) / span * amplitude
    else:
        terrain = np.zeros_like(terrain)
    return terrain


def _cell_xy(grid_extent: int, cell_size: float):
    """World (x, y) of cell centers; row 0 is the northern edge."""
    cols = (np.arange(grid_extent) + 0.5) * cell_size
    rows = (grid_extent - np.arange(grid_extent) - 0.5) * cell_size
    return cols, rows  # x by column, y by row


def _plane_offset(normal: np.ndarray, point: np.ndarray) -> float:
    return float(np.dot(normal, point))


def _facet(normal, point_on_plane, cells):
    n = np.asarray(normal, dtype=float)
    n = n / np.linalg.norm(n)
    if n[2] < 0:
        n = -n
    return n, _plane_offset(n, np.asarray(point_on_plane, float)), cells


def _build_roof(style, rows, cols, x, y, base_z, rng, cell_size):
    """Return (z values over the footprint bbox, facet list).

    ``rows``/``cols`` are index arrays of the footprint bbox; the roof is
    evaluated at cell centers so each facet is exactly planar.
    """
    xs = x[cols]          # (W,) world x per bbox column
    ys = y[rows]          # (H,) world y per bbox row
    X, Y = np.meshgrid(xs, ys)
    H, W = X.shape
    R, C = np.meshgrid(rows, cols, indexing="ij")
    cells_all = np.stack([R.ravel(), C.ravel()], axis=1)
    facets = []

    if style == "flat":
        Z = np.full((H, W), base_z)
        facets.append(_facet([0, 0, 1], [xs[0], ys[0], base_z], cells_all))
        return Z, facets

    if style == "shed":
        pitch = np.radians(rng.uniform(8.0, 30.0))
        s = np.tan(pitch)
        axis = rng.integers(0, 4)  # 0: +x, 1: -x, 2: +y, 3: -y
        if axis == 0:
            Z = base_z + s * (X - xs.min())
            normal = [-s, 0.0, 1.0]
        elif axis == 1:
            Z = base_z + s * (xs.max() - X)
            normal = [s, 0.0, 1.0]
        elif axis == 2:
            Z = base_z + s * (Y - ys.min())
            normal = [0.0, -s, 1.0]
        else:
            Z = base_z + s * (ys.max() - Y)
            normal = [0.0, s, 1.0]
        anchor = np.array([X.ravel()[0], Y.ravel()[0], Z.ravel()[0]])
        facets.append(_facet(normal, anchor, cells_all))
        return Z, facets

    pitch = np.radians(rng.uniform(15.0, 45.0))
    s = np.tan(pitch)

    if style == "gabled":
        # ridge along the longer bbox axis
        if W >= H:
            mid = 0.5 * (ys.min() + ys.max())
            dist = np.abs(Y - mid)
            ridge_z = base_z + s * (ys.max() - mid)
            Z = ridge_z - s * dist
            north = (Y >= mid)
            for side_mask, ny in ((north, s), (~north, -s)):
                cells = np.stack([R[side_mask], C[side_mask]], axis=1)
                pt_r, pt_c = R[side_mask][0], C[side_mask][0]
                pt = np.array([x[pt_c], y[pt_r], Z[side_mask][0]])
                facets.append(_facet([0.0, ny, 1.0], pt, cells))
        else:
            mid = 0.5 * (xs.min() + xs.max())
            dist = np.abs(X - mid)
            ridge_z = base_z + s * (xs.max() - mid)
            Z = ridge_z - s * dist
            east = (X >= mid)
            for side_mask, nx in ((east, s), (~east, -s)):
                cells = np.stack([R[side_mask], C[side_mask]], axis=1)
                pt = np.array([X[side_mask][0], Y[side_mask][0], Z[side_mask][0]])
                facets.append(_facet([nx, 0.0, 1.0], pt, cells))
        return Z, facets

    if style == "hipped":
        # equal pitch from all four eaves; 4 facets meeting at a ridge
        half = 0.5 * cell_size
        xw, xe = xs.min() - half, xs.max() + half
        ys_, yn = ys.min() - half, ys.max() + half
        d_w = X - xw
        d_e = xe - X
        d_s = Y - ys_
        d_n = yn - Y
        stack = np.stack([d_w, d_e, d_s, d_n])
        Z = base_z + s * stack.min(axis=0)
        facet_idx = stack.argmin(axis=0)
        normals = ([-s, 0, 1], [s, 0, 1], [0, -s, 1], [0, s, 1])
        for k, nvec in enumerate(normals):
            m = facet_idx == k
            if not m.any():
                continue
            cells = np.stack([R[m], C[m]], axis=1)
            pt = np.array([X[m][0], Y[m][0], Z[m][0]])
            facets.append(_facet(nvec, pt, cells))
        return Z, facets

    raise SceneGenerationError(f"unknown roof style {style!r}")


def generate_scene(spec: SceneSpec) -> Scene:
    """Generate a deterministic ground-truth scene for the given spec."""
    rng = np.random.default_rng(spec.rng_seed)
    n = spec.extent
    cell = spec.cell_size
    dtm_vals = _smooth_terrain(rng, n, spec.terrain_amplitude)
    dsm_vals = dtm_vals.copy()
    footprints = np.zeros((n, n), dtype=np.int32)
    occupied = np.zeros((n, n), dtype=bool)
    x, y = _cell_xy(n, cell)

    planes: dict[int, list[TruthPlane]] = {}
    obstacle_mask = np.zeros((n, n), dtype=bool)
    plane_counter = 0

    for bid in range(1, spec.building_count + 1):
        placed = False
        for _ in range(200):
            w_m = rng.uniform(6.0, 14.0)
            h_m = rng.uniform(6.0, 14.0)
            wc = max(4, int(round(w_m / cell)))
            hc = max(4, int(round(h_m / cell)))
            margin = 3
            if n - hc - 2 * margin <= 0 or n - wc - 2 * margin <= 0:
                continue
            r0 = int(rng.integers(margin, n - hc - margin))
            c0 = int(rng.integers(margin, n - wc - margin))
            gap = 3
            rlo, rhi = max(0, r0 - gap), min(n, r0 + hc + gap)
            clo, chi = max(0, c0 - gap), min(n, c0 + wc + gap)
            if occupied[rlo:rhi, clo:chi].any():
                continue
            placed = True
            break
        if not placed:
            raise SceneGenerationError(
                f"could not place building {bid} within extent {n}; enlarge the scene"
            )
        rows = np.arange(r0, r0 + hc)
        cols = np.arange(c0, c0 + wc)
        occupied[r0:r0 + hc, c0:c0 + wc] = True
        footprints[r0:r0 + hc, c0:c0 + wc] = bid

        style = str(rng.choice(np.array(spec.roof_styles)))
        base_z = float(dtm_vals[r0:r0 + hc, c0:c0 + wc].max() + rng.uniform(3.0, 5.0))
        Z, facets = _build_roof(style, rows, cols, x, y, base_z, rng, cell)
        dsm_vals[r0:r0 + hc, c0:c0 + wc] = Z

        building_planes = []
        for normal, offset, cells in facets:
            plane_counter += 1
            building_planes.append(
                TruthPlane(plane_counter, bid, normal, offset, cells.astype(np.int32))
            )
        planes[bid] = building_planes

        # roof obstacles: small boxes (vents, chimneys) raised off the facets
        n_obstacles = int(rng.poisson(spec.obstacle_density)) if cell * cell <= 1.0 else 0
        for _ in range(n_obstacles):
            max_side = max(1, int(np.floor(1.0 / cell)))  # footprint <= 1 m^2
            ow = int(rng.integers(1, max_side + 1))
            oh = int(rng.integers(1, max_side + 1))
            while ow > 1 and ow * oh * cell * cell > 1.0:
                ow -= 1
            if hc - oh - 2 <= 1 or wc - ow - 2 <= 1:
                continue
            orr = int(rng.integers(r0 + 1, r0 + hc - oh - 1))
            occ_ = int(rng.integers(c0 + 1, c0 + wc - ow - 1))
            height = rng.uniform(0.3, 1.5)
            # a vent flush with the extension of another facet's plane is a
            # pathological coincidence; keep obstacle tops clear of every facet
            o_rows, o_cols = np.meshgrid(
                np.arange(orr, orr + oh), np.arange(occ_, occ_ + ow), indexing="ij")
            ox = x[o_cols.ravel()]
            oy = y[o_rows.ravel()]
            oz = dsm_vals[o_rows.ravel(), o_cols.ravel()] + height
            for _retry in range(10):
                clear = True
                for fn, fo, _cells in facets:
                    gap = np.abs(ox * fn[0] + oy * fn[1] + oz * fn[2] - fo)
                    if gap.min() < 0.2:
                        clear = False
                        break
                if clear:
                    break
                height = rng.uniform(0.3, 1.5)
                oz = dsm_vals[o_rows.ravel(), o_cols.ravel()] + height
            else:
                continue
            dsm_vals[orr:orr + oh, occ_:occ_ + ow] += height
            obstacle_mask[orr:orr + oh, occ_:occ_ + ow] = True

    # prune obstacle cells from the facet truth
    if obstacle_mask.any():
        for bid, plist in planes.items():
            planes[bid] = [
                TruthPlane(
                    p.plane_id,
                    p.building_id,
                    p.normal,
                    p.offset,
                    p.cells[~obstacle_mask[p.cells[:, 0], p.cells[:, 1]]],
                )
                for p in plist
            ]

    # trees: paraboloid canopies merged into the DSM (not into footprints)
    inside = footprints > 0
    for _ in range(spec.tree_count):
        for _ in range(50):
            tr = int(rng.integers(2, n - 2))
            tc = int(rng.integers(2, n - 2))
            radius = rng.uniform(1.5, 3.5)
            if spec.keep_trees_off_buildings:
                rad_c = int(np.ceil(radius / cell)) + 1
                rlo, rhi = max(0, tr - rad_c), min(n, tr + rad_c + 1)
                clo, chi = max(0, tc - rad_c), min(n, tc + rad_c + 1)
                if inside[rlo:rhi, clo:chi].any():
                    continue
            elif inside[tr, tc]:
                continue
            break
        else:
            continue
        height = rng.uniform(4.0, 9.0)
        X, Y = np.meshgrid(x, y)
        d2 = (X - x[tc]) ** 2 + (Y - y[tr]) ** 2
        canopy = dtm_vals[tr, tc] + height * (1.0 - d2 / (radius * radius))
        dsm_vals = np.maximum(dsm_vals, np.where(d2 <= radius * radius, canopy, -np.inf))

    # occlusion: canopy grew above a roof facet
    occluded = np.zeros((n, n), dtype=bool)
    for bid, plist in planes.items():
        for p in plist:
            rr, cc = p.cells[:, 0], p.cells[:, 1]
            expect = (p.offset - p.normal[0] * x[cc] - p.normal[1] * y[rr]) / p.normal[2]
            covered = dsm_vals[rr, cc] > expect + 1e-6
            occluded[rr[covered], cc[covered]] = True
    if occluded.any():
        for bid, plist in planes.items():
            planes[bid] = [
                TruthPlane(
                    p.plane_id, p.building_id, p.normal, p.offset,
                    p.cells[~occluded[p.cells[:, 0], p.cells[:, 1]]],
                )
                for p in plist
            ]

    # probabilities: 1 on visible roof, low under canopy, smooth falloff outside
    dist_out = ndimage.distance_transform_edt(~inside) * cell
    prob = np.where(inside & ~occluded, 1.0, np.where(inside, 0.15, np.exp(-dist_out / 0.4)))

    dsm = HeightGrid(dsm_vals, cell)
    dtm = HeightGrid(dtm_vals, cell)
    scene = Scene(
        spec=spec,
        dsm_hq=dsm,
        dtm=dtm,
        footprints_truth=footprints,
        probabilities_hq=ProbabilityGrid(prob, cell),
        roof_planes_truth=planes,
        pseudo_rgb=_render_pseudo_rgb(dsm, dtm, footprints, obstacle_mask),
    )
    return scene


def _render_pseudo_rgb(dsm, dtm, footprints, obstacle_mask) -> np.ndarray:
    shade = hillshade(dsm, sun_azimuth=315.0, sun_elevation=45.0).astype(np.float64) / 255.0
    tree = (dsm.values > dtm.values + 0.3) & (footprints == 0)
    hues = {
        "ground": np.array([0.45, 0.55, 0.30]),
        "roof": np.array([0.60, 0.38, 0.30]),
        "tree": np.array([0.18, 0.40, 0.18]),
        "obstacle": np.array([0.50, 0.50, 0.52]),
    }
    h, w = dsm.shape
    rgb = np.empty((h, w, 3))
    rgb[:] = hues["ground"]
    rgb[footprints > 0] = hues["roof"]
    rgb[tree] = hues["tree"]
    rgb[obstacle_mask] = hues["obstacle"]
    lum = (0.3 + 0.7 * shade)[..., None]
    return np.round(rgb * lum * 255.0).astype(np.uint8)


def _resample_down_up(values: np.ndarray, factor: int) -> np.ndarray:
    """Block-mean downsample then bilinear upsample back to the input shape."""
    if factor == 1:
        return values
    h, w = values.shape
    ph = (-h) % factor
    pw = (-w) % factor
    padded = np.pad(values, ((0, ph), (0, pw)), mode="edge")
    hh, ww = padded.shape
    down = padded.reshape(hh // factor, factor, ww // factor, factor).mean(axis=(1, 3))
    rr = (np.arange(h) + 0.5) / factor - 0.5
    cc = (np.arange(w) + 0.5) / factor - 0.5
    R, C = np.meshgrid(rr, cc, indexing="ij")
    return ndimage.map_coordinates(down, [R, C], order=1, mode="nearest")


def degrade(
    scene: Scene, params: DegradeParams, seed: int = 0
) -> tuple[HeightGrid, ProbabilityGrid]:
    """Simulate a low-quality acquisition of the scene.

    Order is fixed: foliage edits -> sub-pixel jitter -> blur ->
    downsample/upsample -> elevation noise.  Identity parameters return
    the high-quality layers bit-exactly.
    """
    rng = np.random.default_rng(seed)
    dsm = scene.dsm_hq.values.copy()
    prob = scene.probabilities_hq.values.copy()
    cell = scene.dsm_hq.cell_size

    if params.foliage_change_probability > 0:
        tree_mask = (dsm > scene.dtm.values + 0.3) & (scene.footprints_truth == 0)
        labels, n_comp = ndimage.label(tree_mask)
        for comp in range(1, n_comp + 1):
            if rng.random() < params.foliage_change_probability:
                m = labels == comp
                dsm[m] = scene.dtm.values[m]
        n_new = int(rng.binomial(max(1, n_comp), params.foliage_change_probability))
        n_grid = dsm.shape[0]
        x, y = _cell_xy(n_grid, cell)
        for _ in range(n_new):
            tr = int(rng.integers(2, n_grid - 2))
            tc = int(rng.integers(2, n_grid - 2))
            if scene.footprints_truth[tr, tc] != 0:
                continue
            radius = rng.uniform(1.5, 3.0)
            height = rng.uniform(3.0, 7.0)
            X, Y = np.meshgrid(x, y)
            d2 = (X - x[tc]) ** 2 + (Y - y[tr]) ** 2
            canopy = scene.dtm.values[tr, tc] + height * (1.0 - d2 / radius**2)
            dsm = np.maximum(dsm, np.where(d2 <= radius * radius, canopy, -np.inf))

    if params.registration_jitter > 0:
        shift = rng.uniform(-params.registration_jitter, params.registration_jitter, size=2)
        dsm = ndimage.shift(dsm, shift, order=1, mode="nearest")
        prob = ndimage.shift(prob, shift, order=1, mode="nearest")

    if params.gaussian_blur_sigma > 0:
        dsm = ndimage.gaussian_filter(dsm, params.gaussian_blur_sigma, mode="nearest")
        prob = ndimage.gaussian_filter(prob, params.gaussian_blur_sigma, mode="nearest")

    dsm = _resample_down_up(dsm, params.downsample_factor)
    prob = _resample_down_up(prob, params.downsample_factor)

    if params.noise_sigma > 0:
        dsm = dsm + rng.normal(0.0, params.noise_sigma, size=dsm.shape)

    # probabilities lose contrast rather than gaining additive noise
    soften = min(0.8, 0.3 * params.gaussian_blur_sigma)
    if soften > 0:
        prob = 0.5 + (prob - 0.5) * (1.0 - soften)

    return (
        HeightGrid(dsm, cell, scene.dsm_hq.origin),
        ProbabilityGrid(np.clip(prob, 0.0, 1.0), cell, scene.dsm_hq.origin),
    )


def rough_footprints(footprints: np.ndarray, radius: int = 2) -> np.ndarray:
    """Coarsen truth footprints into rough input polygons by dilation.

    Mimics the loose footprints handed to refinement: each id grows by
    ``radius`` cells; contested cells go to the lower id.  Original cells
    never change id.
    """
    out = footprints.astype(np.int32).copy()
    structure = ndimage.generate_binary_structure(2, 1)
    for bid in sorted(set(np.unique(footprints)) - {0}):
        grown = ndimage.binary_dilation(footprints == bid, structure, iterations=radius)
        out[grown & (out == 0)] = bid
    return out


# ---------------------------------------------------------------------------
# scene directory IO
# ---------------------------------------------------------------------------

LAYER_FILES = {
    "dsm_hq": "dsm_hq.asc",
    "dtm": "dtm.asc",
    "footprints": "footprints.asc",
    "probabilities": "probabilities.asc",
    "plane_labels": "plane_labels.asc",
    "pseudo_rgb": "pseudo_rgb.png",
}


def save_scene(scene: Scene, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    gridio.write_grid(scene.dsm_hq, out / LAYER_FILES["dsm_hq"])
    gridio.write_grid(scene.dtm, out / LAYER_FILES["dtm"])
    gridio.write_label_grid(scene.footprints_truth, scene.dsm_hq, out / LAYER_FILES["footprints"])
    gridio.write_probability_grid(scene.probabilities_hq, out / LAYER_FILES["probabilities"])
    plane_labels = np.zeros(scene.dsm_hq.shape, dtype=np.int32)
    manifest_buildings = []
    for bid in scene.building_ids:
        entries = []
        for p in scene.roof_planes_truth[bid]:
            if len(p.cells):
                plane_labels[p.cells[:, 0], p.cells[:, 1]] = p.plane_id
            entries.append({
                "plane_id": p.plane_id,
                "normal": [float(v) for v in p.normal],
                "offset": p.offset,
                "cell_count": int(len(p.cells)),
            })
        manifest_buildings.append({"id": bid, "planes": entries})
    gridio.write_label_grid(plane_labels, scene.dsm_hq, out / LAYER_FILES["plane_labels"])
    gridio.write_png(scene.pseudo_rgb, out / LAYER_FILES["pseudo_rgb"])
    manifest = {
        "schema_version": SCENE_SCHEMA_VERSION,
        "spec": asdict(scene.spec),
        "buildings": manifest_buildings,
        "layers": dict(LAYER_FILES),
    }
    (out / "scene.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def load_scene(scene_dir) -> Scene:
    d = Path(scene_dir)
    manifest = json.loads((d / "scene.json").read_text())
    if manifest.get("schema_version") != SCENE_SCHEMA_VERSION:
        raise ValueError(f"unsupported scene schema {manifest.get('schema_version')!r}")
    spec_kwargs = dict(manifest["spec"])
    spec_kwargs["roof_styles"] = tuple(spec_kwargs["roof_styles"])
    spec = SceneSpec(**spec_kwargs)
    dsm = gridio.read_grid(d / LAYER_FILES["dsm_hq"])
    dtm = gridio.read_grid(d / LAYER_FILES["dtm"])
    footprints, _ = gridio.read_label_grid(d / LAYER_FILES["footprints"])
    probs = gridio.read_probability_grid(d / LAYER_FILES["probabilities"])
    plane_labels, _ = gridio.read_label_grid(d / LAYER_FILES["plane_labels"])
    planes: dict[int, list[TruthPlane]] = {}
    for b in manifest["buildings"]:
        plist = []
        for e in b["planes"]:
            rr, cc = np.nonzero(plane_labels == e["plane_id"])
            plist.append(TruthPlane(
                e["plane_id"], b["id"], np.array(e["normal"]), e["offset"],
                np.stack([rr, cc], axis=1).astype(np.int32),
            ))
        planes[b["id"]] = plist
    return Scene(
        spec=spec,
        dsm_hq=dsm,
        dtm=dtm,
        footprints_truth=footprints,
        probabilities_hq=probs,
        roof_planes_truth=planes,
        pseudo_rgb=gridio.read_png(d / LAYER_FILES["pseudo_rgb"]),
    )
