"""Command-line interface.

Subcommands mirror the pipeline stages so each is independently runnable
and resumable from files: synth, degrade, refine, segment, flux, layout,
run, evaluate, render.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import gridio
from .flux import SiteConfig, compute_horizons_tiled, flux_map
from .footprint import FootprintSet, refine_footprints
from .grids import compute_normals, hillshade
from .panels import layout_panels, select_subarray
from .pipeline import (
    PipelineConfig,
    PipelineError,
    apply_overrides,
    evaluate,
    load_weather,
    run_pipeline,
    stage_degrade,
    stage_segment,
    stage_synth,
)
from .report import SolarReport
from .synth import SceneSpec

logger = logging.getLogger(__name__)


def _load_config(args) -> PipelineConfig:
    cfg = PipelineConfig.load(args.config) if args.config else PipelineConfig()
    overrides = list(args.set or [])
    if getattr(args, "scene", None):
        overrides.append(f"scene_dir={args.scene}")
    if getattr(args, "out", None):
        overrides.append(f"out_dir={args.out}")
    if getattr(args, "jobs", None):
        overrides.append(f"jobs={args.jobs}")
    return apply_overrides(cfg, overrides)


def _add_config_args(p, scene=True, out=True):
    p.add_argument("--config", help="pipeline config JSON")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override a config entry, e.g. --set site.latitude=40.0")
    if scene:
        p.add_argument("--scene", help="scene directory")
    if out:
        p.add_argument("--out", help="output directory")
    p.add_argument("--jobs", type=int, help="worker threads for tiles/buildings")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="roofpv",
                                 description="rooftop solar potential pipeline")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic ground-truth scene")
    p.add_argument("--scene", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--extent", type=int, default=96)
    p.add_argument("--cell-size", type=float, default=0.5)
    p.add_argument("--buildings", type=int, default=3)
    p.add_argument("--trees", type=int, default=4)
    p.add_argument("--styles", default="flat,gabled,hipped,shed")
    p.add_argument("--obstacle-density", type=float, default=1.0)
    p.add_argument("--terrain-amplitude", type=float, default=1.0)
    p.add_argument("--keep-trees-off-buildings", action="store_true")

    p = sub.add_parser("degrade", help="derive low-quality layers for a scene")
    _add_config_args(p, out=False)

    p = sub.add_parser("refine", help="refine footprints against a DSM and probabilities")
    _add_config_args(p)

    p = sub.add_parser("segment", help="segment roofs into planes")
    p.add_argument("--dsm", required=True)
    p.add_argument("--footprints", required=True)
    p.add_argument("--out-json", required=True)
    p.add_argument("--labels-out", help="also write a per-cell instance label grid")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", help="pipeline config JSON (segment section)")
    p.add_argument("--set", action="append", metavar="KEY=VALUE")

    p = sub.add_parser("flux", help="compute the annual flux grid")
    _add_config_args(p)

    p = sub.add_parser("layout", help="panel layout from existing flux + footprints")
    _add_config_args(p)

    p = sub.add_parser("run", help="full pipeline: refine, segment, flux, layout, report")
    _add_config_args(p)

    p = sub.add_parser("evaluate", help="MAPE metrics between two reports")
    p.add_argument("--pred", required=True)
    p.add_argument("--ref", required=True)
    p.add_argument("--targets-kw", default="5")
    p.add_argument("--out", help="metrics JSON path (default: stdout)")

    p = sub.add_parser("render", help="render a grid file to PNG")
    p.add_argument("--grid", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--mode", choices=["hillshade", "heat"], default="hillshade")
    return ap


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        if args.command == "synth":
            spec = SceneSpec(
                rng_seed=args.seed,
                extent=args.extent,
                cell_size=args.cell_size,
                building_count=args.buildings,
                roof_styles=tuple(args.styles.split(",")),
                tree_count=args.trees,
                obstacle_density=args.obstacle_density,
                terrain_amplitude=args.terrain_amplitude,
                keep_trees_off_buildings=args.keep_trees_off_buildings,
            )
            stage_synth(spec, args.scene)
        elif args.command == "degrade":
            cfg = _load_config(args)
            stage_degrade(cfg.scene_dir, cfg.degrade, cfg.degrade_seed)
        elif args.command == "refine":
            cfg = _load_config(args)
            from .pipeline import _resolve_grid
            from .synth import rough_footprints
            scene_dir = Path(cfg.scene_dir)
            dsm = gridio.read_grid(_resolve_grid(scene_dir, cfg.dsm, "refine"))
            probs = gridio.read_probability_grid(
                _resolve_grid(scene_dir, cfg.probabilities, "refine"))
            labels, _ = gridio.read_label_grid(scene_dir / "footprints.asc")
            rough = rough_footprints(labels, radius=cfg.rough_radius)
            refined = refine_footprints(dsm, FootprintSet.from_labels(rough), probs, cfg.refine)
            out_dir = Path(cfg.out_dir)
            out_dir.mkdir(parents=True, exist_ok=True)
            gridio.write_label_grid(refined.labels, dsm, out_dir / "footprints_refined.asc")
        elif args.command == "segment":
            seg_cfg = PipelineConfig()
            if args.config:
                seg_cfg = PipelineConfig.load(args.config)
            seg_cfg = apply_overrides(seg_cfg, list(args.set or []))
            stage_segment(args.dsm, args.footprints, args.out_json, seg_cfg.segment,
                          args.seed, labels_out=args.labels_out)
        elif args.command == "flux":
            cfg = _load_config(args)
            from .pipeline import _resolve_grid
            scene_dir = Path(cfg.scene_dir)
            out_dir = Path(cfg.out_dir)
            out_dir.mkdir(parents=True, exist_ok=True)
            dsm = gridio.read_grid(_resolve_grid(scene_dir, cfg.dsm, "flux"))
            weather = load_weather(cfg, out_dir)
            grid = flux_map(dsm, compute_normals(dsm), weather, cfg.site,
                            horizons=compute_horizons_tiled(dsm, cfg.site, jobs=cfg.jobs))
            gridio.write_grid(grid, out_dir / "flux.asc")
            if cfg.emit_png:
                gridio.write_png(gridio.colorize(grid.values), out_dir / "flux.png")
        elif args.command == "layout":
            cfg = _load_config(args)
            _run_layout_stage(cfg)
        elif args.command == "run":
            cfg = _load_config(args)
            report = run_pipeline(cfg)
            logger.info("report written: %d buildings, %.1f kWh/yr total",
                        len(report.buildings),
                        sum(b.total_energy_kwh for b in report.buildings))
        elif args.command == "evaluate":
            pred = SolarReport.load(args.pred)
            ref = SolarReport.load(args.ref)
            targets = [float(t) for t in str(args.targets_kw).split(",") if t]
            metrics = evaluate(pred, ref, targets)
            text = json.dumps(metrics, indent=2, sort_keys=True)
            if args.out:
                Path(args.out).write_text(text + "\n")
            else:
                print(text)
        elif args.command == "render":
            grid = gridio.read_grid(args.grid)
            if args.mode == "hillshade":
                gridio.write_png(hillshade(grid), args.out)
            else:
                gridio.write_png(gridio.colorize(grid.values), args.out)
        return 0
    except (PipelineError, FileNotFoundError, ValueError) as exc:
        logger.error("%s", exc)
        return 1


def _run_layout_stage(cfg: PipelineConfig) -> None:
    """Panel layout from a previously written flux grid and refined footprints."""
    from .pipeline import _building_report
    out_dir = Path(cfg.out_dir)
    flux_path = out_dir / "flux.asc"
    refined_path = out_dir / "footprints_refined.asc"
    for p in (flux_path, refined_path):
        if not p.exists():
            raise PipelineError("layout", f"missing stage input: {p}")
    scene_dir = Path(cfg.scene_dir)
    from .pipeline import _resolve_grid
    dsm = gridio.read_grid(_resolve_grid(scene_dir, cfg.dsm, "layout"))
    flux_grid = gridio.read_grid(flux_path)
    labels, _ = gridio.read_label_grid(refined_path)
    fs = FootprintSet.from_labels(labels)
    buildings = [
        _building_report(bid, fs.cells(bid), dsm, flux_grid, cfg) for bid in fs.ids
    ]
    report = SolarReport(
        site={"latitude": cfg.site.latitude, "longitude": cfg.site.longitude,
              "targets_kw": list(cfg.targets_kw), "dsm": cfg.dsm,
              "segment_seed": cfg.segment_seed},
        buildings=buildings,
    )
    report.save(out_dir / "report.json")


if __name__ == "__main__":
    sys.exit(main())
