"""Panel tiling in roof-plane coordinates and sub-array selection.

Panels live on a regular lattice in the (eaves, up-slope) basis of each
roof segment.  A small phase search over lattice origins maximizes
(total energy, then layout compactness); every panel's ground-projected
footprint must stay inside the segment's cells, which also keeps panels
off obstacle cells (those belong to no segment).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .grids import HeightGrid
from .roofseg import RoofSegment

logger = logging.getLogger(__name__)


class LayoutError(ValueError):
    pass


@dataclass(frozen=True)
class PanelSpec:
    width: float = 0.99        # meters along the eaves vector
    height: float = 1.65       # meters along the up-slope vector
    rated_power: float = 330.0  # watts
    spacing: float = 0.02      # meters between panels in both lattice axes
    system_efficiency: float = 0.85  # inverter + wiring losses

    def __post_init__(self):
        if min(self.width, self.height, self.rated_power) <= 0:
            raise LayoutError("panel dimensions and rated power must be positive")
        if self.spacing < 0 or not 0 < self.system_efficiency <= 1:
            raise LayoutError("spacing must be >= 0 and efficiency in (0, 1]")


@dataclass(frozen=True)
class PanelPlacement:
    panel_id: int
    segment_id: int
    center: np.ndarray      # 3D meters on the roof plane
    eaves: np.ndarray       # unit vector along the eaves (horizontal)
    up_slope: np.ndarray    # unit vector up the slope
    annual_energy_kwh: float
    rated_power_w: float


def eaves_upslope(normal: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """In-plane orthonormal basis of a roof plane.

    e = [n_y, -n_x, 0] / hypot(n_x, n_y) and u = e x n.  For horizontal
    roofs the pair is the documented arbitrary choice e=[1,0,0],
    u=[0,1,0].  Requires a unit normal with n_z > 0.
    """
    n = np.asarray(normal, dtype=np.float64)
    if abs(np.linalg.norm(n) - 1.0) > 1e-9:
        raise LayoutError(f"normal must be unit length, got |n| = {np.linalg.norm(n)}")
    if n[2] <= 0:
        raise LayoutError("normal must point upward")
    horiz = np.hypot(n[0], n[1])
    if horiz < 1e-9:
        return np.array([1.0, 0.0, 0.0]), np.array([0.0, 1.0, 0.0])
    e = np.array([n[1] / horiz, -n[0] / horiz, 0.0])
    u = np.cross(e, n)
    return e, u


def _world_to_cell(x, y, grid: HeightGrid):
    col = np.floor((x - grid.origin[0]) / grid.cell_size).astype(np.int64)
    row = grid.height - 1 - np.floor((y - grid.origin[1]) / grid.cell_size).astype(np.int64)
    return row, col


def layout_panels(
    segment: RoofSegment,
    spec: PanelSpec,
    flux: HeightGrid,
    segment_id: int = 0,
    phase_steps: int = 5,
) -> list[PanelPlacement]:
    """Tile one segment with panels; returns placements with annual energy.

    The lattice origin is searched over a phase_steps x phase_steps grid
    of offsets; the best phase maximizes total energy and then minimizes
    the bounding-rectangle area of the layout.  Panels project entirely
    into the segment's cell set (sampled at half-cell resolution).
    """
    if len(segment.cells) == 0 or segment.area_m2 <= 0:
        return []
    n = segment.plane.normal
    e_vec, u_vec = eaves_upslope(n)
    offset = segment.plane.offset

    member = np.zeros(flux.shape, dtype=bool)
    member[segment.cells[:, 0], segment.cells[:, 1]] = True

    # plane coordinates of segment cell centers
    pts = flux.cell_points(segment.cells[:, 0], segment.cells[:, 1])
    pts[:, 2] = (offset - n[0] * pts[:, 0] - n[1] * pts[:, 1]) / n[2]
    a_cells = pts @ e_vec
    b_cells = pts @ u_vec
    # exact support of the cell squares along each axis: plane coordinates
    # are affine in ground (x, y), so a cell's extent is center +- half the
    # L1 norm of the effective 2D direction
    half = flux.cell_size / 2.0
    e_eff = np.array([e_vec[0], e_vec[1]])
    u_eff = np.array([
        u_vec[0] - u_vec[2] * n[0] / n[2],
        u_vec[1] - u_vec[2] * n[1] / n[2],
    ])
    a_pad = half * (abs(e_eff[0]) + abs(e_eff[1]))
    b_pad = half * (abs(u_eff[0]) + abs(u_eff[1]))
    amin, amax = a_cells.min() - a_pad, a_cells.max() + a_pad
    bmin, bmax = b_cells.min() - b_pad, b_cells.max() + b_pad

    pitch_a = spec.width + spec.spacing
    pitch_b = spec.height + spec.spacing
    if amax - amin < spec.width or bmax - bmin < spec.height:
        return []

    # sample offsets inside one panel, half-cell resolution, eps inset
    eps = 1e-6
    na = max(2, int(np.ceil(spec.width / (flux.cell_size / 2.0))) + 1)
    nb = max(2, int(np.ceil(spec.height / (flux.cell_size / 2.0))) + 1)
    sa = np.linspace(eps, spec.width - eps, na)
    sb = np.linspace(eps, spec.height - eps, nb)
    SA, SB = np.meshgrid(sa, sb, indexing="ij")
    sample_a = SA.ravel()
    sample_b = SB.ravel()

    def panel_cells(a0: float, b0: float):
        """Covered (row, col) cells if the panel fits fully inside; else None."""
        a = a0 + sample_a
        b = b0 + sample_b
        q = a[:, None] * e_vec[None, :] + b[:, None] * u_vec[None, :] + offset * n[None, :]
        row, col = _world_to_cell(q[:, 0], q[:, 1], flux)
        ok = (row >= 0) & (row < flux.height) & (col >= 0) & (col < flux.width)
        if not ok.all() or not member[row, col].all():
            return None
        return np.unique(np.stack([row, col], axis=1), axis=0)

    best = None  # (total_energy, -bbox_area, placements)
    for pa in range(phase_steps):
        for pb in range(phase_steps):
            a_start = amin + pa * pitch_a / phase_steps
            b_start = bmin + pb * pitch_b / phase_steps
            placements = []
            total = 0.0
            a_lo = b_lo = np.inf
            a_hi = b_hi = -np.inf
            i = 0
            a0 = a_start
            while a0 + spec.width <= amax + 1e-9:
                b0 = b_start
                while b0 + spec.height <= bmax + 1e-9:
                    cells = panel_cells(a0, b0)
                    if cells is not None:
                        mean_flux = float(flux.values[cells[:, 0], cells[:, 1]].mean())
                        energy = mean_flux * spec.width * spec.height * spec.system_efficiency
                        center = (
                            (a0 + spec.width / 2.0) * e_vec
                            + (b0 + spec.height / 2.0) * u_vec
                            + offset * n
                        )
                        placements.append((center, energy))
                        total += energy
                        a_lo, a_hi = min(a_lo, a0), max(a_hi, a0 + spec.width)
                        b_lo, b_hi = min(b_lo, b0), max(b_hi, b0 + spec.height)
                    b0 += pitch_b
                a0 += pitch_a
                i += 1
            if not placements:
                continue
            bbox = (a_hi - a_lo) * (b_hi - b_lo)
            key = (total, -bbox)
            if best is None or key > best[0]:
                best = (key, placements)
    if best is None:
        return []
    return [
        PanelPlacement(
            panel_id=i,
            segment_id=segment_id,
            center=center,
            eaves=e_vec,
            up_slope=u_vec,
            annual_energy_kwh=energy,
            rated_power_w=spec.rated_power,
        )
        for i, (center, energy) in enumerate(best[1])
    ]


def select_subarray(panels: list[PanelPlacement], target_kw: float) -> list[PanelPlacement]:
    """The k highest-energy panels for a fixed-capacity array.

    k = floor(target_kw * 1000 / rated_power); ties broken by panel
    identity (segment id, then panel id) so selection is deterministic.
    Greedy top-k is exact because panel energies are independent.
    """
    if target_kw <= 0:
        raise LayoutError(f"target_kw must be positive, got {target_kw}")
    if not panels:
        return []
    rated = {p.rated_power_w for p in panels}
    if len(rated) != 1:
        raise LayoutError("mixed panel ratings are not supported")
    k = int(np.floor(target_kw * 1000.0 / rated.pop()))
    if k == 0:
        logger.warning("target %.2f kW is below one panel; empty sub-array", target_kw)
        return []
    ranked = sorted(panels, key=lambda p: (-p.annual_energy_kwh, p.segment_id, p.panel_id))
    return ranked[:k]
