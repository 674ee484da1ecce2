"""End-to-end pipeline: scene -> refine -> segment -> flux -> layout -> report.

Every stage reads and writes plain files (grid format, weather CSV,
report JSON), so stages can also be run one at a time from the CLI and
resumed from disk.  Reports are free of timestamps and dict-order
effects: rerunning with the same config and seeds is bit-identical
regardless of the worker count.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import gridio
from .flux import SiteConfig, compute_horizons_tiled, flux_map
from .footprint import FootprintSet, RefineConfig, refine_footprints
from .grids import HeightGrid, ProbabilityGrid, compute_normals, hillshade
from .panels import PanelSpec, layout_panels, select_subarray
from .report import (
    BuildingReport,
    SolarReport,
    mape,
    mape_at_kw,
    panel_to_dict,
    per_building_errors,
    rle_encode,
    subarray_key,
)
from .roofseg import SegmentConfig, segment_roof
from .synth import (
    DegradeParams,
    SceneSpec,
    degrade,
    generate_scene,
    load_scene,
    rough_footprints,
    save_scene,
)
from .weather import clear_sky_weather, read_weather_csv, write_weather_csv

logger = logging.getLogger(__name__)


class PipelineError(RuntimeError):
    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


@dataclass
class PipelineConfig:
    scene_dir: str = "scene"
    out_dir: str = "out"
    weather_csv: str | None = None  # None: synthesize clear-sky into out_dir
    dsm: str = "dsm_hq"           # dsm_hq | dsm_lq | path to a grid file
    probabilities: str = "probabilities_hq"  # probabilities_hq | probabilities_lq | path
    rough_radius: int = 2
    targets_kw: tuple[float, ...] = (5.0,)
    jobs: int = 1
    emit_png: bool = False
    segment_seed: int = 0
    site: SiteConfig = field(default_factory=SiteConfig)
    refine: RefineConfig = field(default_factory=RefineConfig)
    segment: SegmentConfig = field(default_factory=SegmentConfig)
    panel: PanelSpec = field(default_factory=PanelSpec)
    degrade: DegradeParams = field(default_factory=DegradeParams)
    degrade_seed: int = 0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["targets_kw"] = list(self.targets_kw)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        d = dict(d)
        for key, typ in (("site", SiteConfig), ("refine", RefineConfig),
                         ("segment", SegmentConfig), ("panel", PanelSpec),
                         ("degrade", DegradeParams)):
            if key in d and isinstance(d[key], dict):
                d[key] = typ(**d[key])
        if "targets_kw" in d:
            d["targets_kw"] = tuple(float(t) for t in d["targets_kw"])
        return cls(**d)

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")


def apply_overrides(cfg: PipelineConfig, overrides: list[str]) -> PipelineConfig:
    """Apply ``section.key=value`` (or ``key=value``) CLI overrides."""
    d = cfg.to_dict()
    for item in overrides:
        if "=" not in item:
            raise ValueError(f"override must look like key=value, got {item!r}")
        key, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        target = d
        parts = key.split(".")
        for p in parts[:-1]:
            if p not in target or not isinstance(target[p], dict):
                raise ValueError(f"unknown config section {p!r} in {key!r}")
            target = target[p]
        if parts[-1] not in target:
            raise ValueError(f"unknown config key {key!r}")
        target[parts[-1]] = value
    return PipelineConfig.from_dict(d)


def _resolve_grid(scene_dir: Path, name_or_path: str, kind: str):
    """A scene layer name (dsm_hq, dsm_lq, ...) or an explicit grid path."""
    candidates = {
        "dsm_hq": scene_dir / "dsm_hq.asc",
        "dsm_lq": scene_dir / "dsm_lq.asc",
        "probabilities_hq": scene_dir / "probabilities.asc",
        "probabilities_lq": scene_dir / "probabilities_lq.asc",
    }
    path = candidates.get(name_or_path, Path(name_or_path))
    if not path.exists():
        raise PipelineError(kind, f"input grid not found: {path}")
    return path


def load_weather(config: PipelineConfig, out_dir: Path):
    if config.weather_csv is not None:
        path = Path(config.weather_csv)
        if not path.exists():
            raise PipelineError("flux", f"weather file not found: {path}")
        return read_weather_csv(path)
    weather = clear_sky_weather(config.site.latitude, config.site.longitude)
    write_weather_csv(weather, out_dir / "weather.csv")
    return weather


def _building_report(
    bid: int,
    cells: np.ndarray,
    dsm: HeightGrid,
    flux_grid: HeightGrid,
    config: PipelineConfig,
) -> BuildingReport:
    segments = segment_roof(dsm, cells, config.segment, seed=config.segment_seed + bid)
    seg_dicts = []
    panels = []
    for si, seg in enumerate(segments):
        seg_dicts.append({
            "segment_id": si,
            "normal": [float(v) for v in seg.plane.normal],
            "offset": seg.plane.offset,
            "pitch_deg": seg.pitch_deg,
            "azimuth_deg": seg.azimuth_deg,
            "area_m2": seg.area_m2,
            "cell_count": int(len(seg.cells)),
        })
        panels.extend(layout_panels(seg, config.panel, flux_grid, segment_id=si))
    panels = [replace(p, panel_id=i) for i, p in enumerate(panels)]
    subarrays = {}
    for target in config.targets_kw:
        chosen = select_subarray(panels, target)
        subarrays[subarray_key(target)] = {
            "energy_kwh": float(sum(p.annual_energy_kwh for p in chosen)),
            "panel_ids": [p.panel_id for p in chosen],
        }
    return BuildingReport(
        building_id=int(bid),
        footprint_rle=rle_encode(cells[:, 0], cells[:, 1]),
        total_energy_kwh=float(sum(p.annual_energy_kwh for p in panels)),
        segments=seg_dicts,
        panels=[panel_to_dict(p) for p in panels],
        subarrays=subarrays,
    )


def run_pipeline(config: PipelineConfig) -> SolarReport:
    """Execute refine -> segment -> flux -> layout and write the report."""
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    scene_dir = Path(config.scene_dir)
    try:
        stage = "load"
        if not (scene_dir / "scene.json").exists():
            raise PipelineError(stage, f"scene manifest not found in {scene_dir}")
        dsm = gridio.read_grid(_resolve_grid(scene_dir, config.dsm, stage))
        probs = gridio.read_probability_grid(
            _resolve_grid(scene_dir, config.probabilities, stage)
        )
        footprints_truth, _ = gridio.read_label_grid(scene_dir / "footprints.asc")
        weather = load_weather(config, out_dir)

        stage = "refine"
        rough = rough_footprints(footprints_truth, radius=config.rough_radius)
        refined = refine_footprints(dsm, FootprintSet.from_labels(rough), probs, config.refine)
        refined_path = out_dir / "footprints_refined.asc"
        gridio.write_label_grid(refined.labels, dsm, refined_path)
        written.append(refined_path)

        stage = "flux"
        normals = compute_normals(dsm)
        horizons = compute_horizons_tiled(dsm, config.site, jobs=config.jobs)
        flux_grid = flux_map(dsm, normals, weather, config.site, horizons=horizons)
        flux_path = out_dir / "flux.asc"
        gridio.write_grid(flux_grid, flux_path)
        written.append(flux_path)

        stage = "layout"
        ids = refined.ids
        cell_sets = {bid: refined.cells(bid) for bid in ids}

        def work(bid):
            return _building_report(bid, cell_sets[bid], dsm, flux_grid, config)

        if config.jobs > 1 and len(ids) > 1:
            with ThreadPoolExecutor(max_workers=config.jobs) as pool:
                buildings = list(pool.map(work, ids))
        else:
            buildings = [work(bid) for bid in ids]
        buildings.sort(key=lambda b: b.building_id)

        stage = "report"
        report = SolarReport(
            site={
                "latitude": config.site.latitude,
                "longitude": config.site.longitude,
                "azimuth_count": config.site.azimuth_count,
                "time_step": config.site.time_step,
                "targets_kw": list(config.targets_kw),
                "dsm": config.dsm,
                "segment_seed": config.segment_seed,
            },
            buildings=buildings,
        )
        report_path = out_dir / "report.json"
        report.save(report_path)
        written.append(report_path)

        if config.emit_png:
            gridio.write_png(hillshade(dsm), out_dir / "hillshade.png")
            gridio.write_png(gridio.colorize(flux_grid.values), out_dir / "flux.png")
        return report
    except PipelineError:
        for p in written:
            p.unlink(missing_ok=True)
        raise
    except Exception as exc:
        for p in written:
            p.unlink(missing_ok=True)
        raise PipelineError(stage, str(exc)) from exc


def evaluate(pred: SolarReport, ref: SolarReport, targets_kw) -> dict:
    """MAPE / MAPE@kW with Table-style mean +- sample std over buildings."""

    def stats(errors: dict[int, float], overall: float) -> dict:
        vals = list(errors.values())
        return {
            "mean": overall,
            "std": float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0,
            "per_building": {str(k): v for k, v in sorted(errors.items())},
        }

    total_errors = per_building_errors(pred, ref, lambda b: b.total_energy_kwh)
    if not total_errors and not (pred.buildings or ref.buildings):
        raise ValueError("no buildings to compare")
    out = {
        "schema_version": 1,
        "mape": stats(total_errors, mape(pred, ref)),
        "mape_at_kw": {},
    }
    for target in targets_kw:
        key = subarray_key(target)
        errs = per_building_errors(
            pred, ref, lambda b: float(b.subarrays[key]["energy_kwh"])
        )
        out["mape_at_kw"][key] = stats(errs, mape_at_kw(pred, ref, target))
    return out


# ---------------------------------------------------------------------------
# stage helpers used by the CLI
# ---------------------------------------------------------------------------


def stage_synth(spec: SceneSpec, scene_dir) -> None:
    save_scene(generate_scene(spec), scene_dir)


def stage_degrade(scene_dir, params: DegradeParams, seed: int) -> None:
    scene = load_scene(scene_dir)
    dsm_lq, probs_lq = degrade(scene, params, seed=seed)
    gridio.write_grid(dsm_lq, Path(scene_dir) / "dsm_lq.asc")
    gridio.write_probability_grid(probs_lq, Path(scene_dir) / "probabilities_lq.asc")
    meta = {"params": asdict(params), "seed": seed}
    (Path(scene_dir) / "degrade.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def stage_segment(
    dsm_path, footprints_path, out_json, cfg: SegmentConfig, seed: int,
    labels_out=None,
) -> None:
    dsm = gridio.read_grid(dsm_path)
    labels, _ = gridio.read_label_grid(footprints_path)
    fs = FootprintSet.from_labels(labels)
    result = []
    label_grid = np.zeros(dsm.shape, dtype=np.int32)
    next_label = 0
    for bid in fs.ids:
        segments = segment_roof(dsm, fs.cells(bid), cfg, seed=seed + bid)
        for si, seg in enumerate(segments):
            next_label += 1
            label_grid[seg.cells[:, 0], seg.cells[:, 1]] = next_label
            result.append({
                "building_id": bid,
                "segment_id": si,
                "instance_label": next_label,
                "normal": [float(v) for v in seg.plane.normal],
                "offset": seg.plane.offset,
                "pitch_deg": seg.pitch_deg,
                "azimuth_deg": seg.azimuth_deg,
                "area_m2": seg.area_m2,
                "cell_count": int(len(seg.cells)),
            })
    Path(out_json).write_text(
        json.dumps({"schema_version": 1, "segments": result}, indent=2, sort_keys=True) + "\n"
    )
    if labels_out is not None:
        gridio.write_label_grid(label_grid, dsm, labels_out)
