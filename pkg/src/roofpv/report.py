"""Solar report schema (versioned JSON) and MAPE metrics.

A report carries, per building: the refined footprint (run-length
encoded), roof segment summaries, every panel placement with its annual
energy, the full-tiling total, and fixed-capacity sub-array energies.
MAPE compares two reports building-by-building after footprint-overlap
matching.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .panels import PanelPlacement

logger = logging.getLogger(__name__)

REPORT_SCHEMA_VERSION = 1

MIN_MATCH_IOU = 0.3


def rle_encode(rows: np.ndarray, cols: np.ndarray) -> list[list[int]]:
    """Run-length encode footprint cells as [row, col_start, col_end] (inclusive)."""
    runs = []
    order = np.lexsort((cols, rows))
    rows, cols = rows[order], cols[order]
    i = 0
    while i < len(rows):
        r, c0 = int(rows[i]), int(cols[i])
        c1 = c0
        while i + 1 < len(rows) and rows[i + 1] == r and cols[i + 1] == c1 + 1:
            i += 1
            c1 += 1
        runs.append([r, c0, c1])
        i += 1
    return runs


def rle_cells(runs: list[list[int]]) -> set[tuple[int, int]]:
    cells = set()
    for r, c0, c1 in runs:
        for c in range(c0, c1 + 1):
            cells.add((r, c))
    return cells


@dataclass
class BuildingReport:
    building_id: int
    footprint_rle: list[list[int]]
    total_energy_kwh: float
    segments: list[dict] = field(default_factory=list)
    panels: list[dict] = field(default_factory=list)
    subarrays: dict[str, dict] = field(default_factory=dict)

    @property
    def footprint_cell_count(self) -> int:
        return sum(c1 - c0 + 1 for _, c0, c1 in self.footprint_rle)


@dataclass
class SolarReport:
    site: dict
    buildings: list[BuildingReport] = field(default_factory=list)
    schema_version: int = REPORT_SCHEMA_VERSION

    def building(self, bid: int) -> BuildingReport:
        for b in self.buildings:
            if b.building_id == bid:
                return b
        raise KeyError(f"no building {bid} in report")

    def to_json(self) -> str:
        payload = {
            "schema_version": self.schema_version,
            "site": self.site,
            "buildings": [
                {
                    "building_id": b.building_id,
                    "footprint_rle": b.footprint_rle,
                    "total_energy_kwh": b.total_energy_kwh,
                    "segments": b.segments,
                    "panels": b.panels,
                    "subarrays": b.subarrays,
                }
                for b in self.buildings
            ],
        }
        return json.dumps(payload, indent=2, sort_keys=True)

    def save(self, path) -> None:
        Path(path).write_text(self.to_json() + "\n")

    @classmethod
    def from_json(cls, text: str) -> "SolarReport":
        payload = json.loads(text)
        if payload.get("schema_version") != REPORT_SCHEMA_VERSION:
            raise ValueError(f"unsupported report schema {payload.get('schema_version')!r}")
        buildings = [
            BuildingReport(
                building_id=b["building_id"],
                footprint_rle=[list(map(int, run)) for run in b["footprint_rle"]],
                total_energy_kwh=float(b["total_energy_kwh"]),
                segments=b.get("segments", []),
                panels=b.get("panels", []),
                subarrays=b.get("subarrays", {}),
            )
            for b in payload["buildings"]
        ]
        return cls(site=payload["site"], buildings=buildings)

    @classmethod
    def load(cls, path) -> "SolarReport":
        return cls.from_json(Path(path).read_text())


def panel_to_dict(p: PanelPlacement) -> dict:
    return {
        "panel_id": p.panel_id,
        "segment_id": p.segment_id,
        "center": [float(v) for v in p.center],
        "eaves": [float(v) for v in p.eaves],
        "up_slope": [float(v) for v in p.up_slope],
        "annual_energy_kwh": p.annual_energy_kwh,
        "rated_power_w": p.rated_power_w,
    }


def _match_buildings(pred: SolarReport, ref: SolarReport) -> tuple[list, list, list]:
    """Greedy footprint-IoU matching; returns (pairs, unmatched_pred, unmatched_ref)."""
    pred_cells = {b.building_id: rle_cells(b.footprint_rle) for b in pred.buildings}
    ref_cells = {b.building_id: rle_cells(b.footprint_rle) for b in ref.buildings}
    candidates = []
    for pb in pred.buildings:
        for rb in ref.buildings:
            pc, rc = pred_cells[pb.building_id], ref_cells[rb.building_id]
            union = len(pc | rc)
            iou = len(pc & rc) / union if union else 0.0
            if iou >= MIN_MATCH_IOU:
                candidates.append((iou, pb.building_id, rb.building_id))
    candidates.sort(key=lambda t: (-t[0], t[1], t[2]))
    used_p, used_r, pairs = set(), set(), []
    for iou, pid, rid in candidates:
        if pid in used_p or rid in used_r:
            continue
        used_p.add(pid)
        used_r.add(rid)
        pairs.append((pid, rid))
    unmatched_p = [b.building_id for b in pred.buildings if b.building_id not in used_p]
    unmatched_r = [b.building_id for b in ref.buildings if b.building_id not in used_r]
    return pairs, unmatched_p, unmatched_r


def _energy_errors(pred: SolarReport, ref: SolarReport, energy_of) -> list[float]:
    pairs, unmatched_p, unmatched_r = _match_buildings(pred, ref)
    errors = []
    skipped = 0
    for pid, rid in pairs:
        e_pred = energy_of(pred.building(pid))
        e_ref = energy_of(ref.building(rid))
        if e_ref == 0.0:
            skipped += 1
            continue
        errors.append(abs(e_pred - e_ref) / e_ref * 100.0)
    if skipped:
        logger.warning("%d matched buildings skipped (reference energy is zero)", skipped)
    # unmatched buildings on either side count as total misses
    errors.extend([100.0] * (len(unmatched_p) + len(unmatched_r)))
    return errors


def mape(pred: SolarReport, ref: SolarReport) -> float:
    """Mean absolute percentage error of full-tiling annual energy."""
    errors = _energy_errors(pred, ref, lambda b: b.total_energy_kwh)
    if not errors:
        raise ValueError("no buildings to compare")
    return float(np.mean(errors))


def subarray_key(target_kw: float) -> str:
    return f"{float(target_kw):g}"


def mape_at_kw(pred: SolarReport, ref: SolarReport, target_kw: float) -> float:
    """MAPE of the fixed-capacity sub-array energies (each report's own pick)."""
    key = subarray_key(target_kw)

    def energy_of(b: BuildingReport) -> float:
        if key not in b.subarrays:
            raise ValueError(f"building {b.building_id} has no {key} kW sub-array")
        return float(b.subarrays[key]["energy_kwh"])

    errors = _energy_errors(pred, ref, energy_of)
    if not errors:
        raise ValueError("no buildings to compare")
    return float(np.mean(errors))


def per_building_errors(pred: SolarReport, ref: SolarReport, energy_of) -> dict[int, float]:
    """Per-matched-building percentage errors (for evaluation breakdowns)."""
    pairs, _, _ = _match_buildings(pred, ref)
    out = {}
    for pid, rid in pairs:
        e_ref = energy_of(ref.building(rid))
        if e_ref == 0.0:
            continue
        out[pid] = abs(energy_of(pred.building(pid)) - e_ref) / e_ref * 100.0
    return out
