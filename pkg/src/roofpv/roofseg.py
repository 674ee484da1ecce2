"""Roof plane segmentation: sequential RANSAC + iterated expansion moves.

A building's roof cells are fitted to a small set of planes by
sequential RANSAC, then cell-to-plane assignments are polished by
alpha-expansion over a smoothness energy and each plane is refit on its
new cells.  Cells that fit no plane (vents, chimneys, AC units) carry a
fixed outlier penalty and end up excluded from every segment.

The energy over assignments P_p (plane index per cell p, or OUTLIER):

    E = sum_p [ d(p, P_p) + m * sum_{q in N(p), P_q != P_p} (1 + max(0, n_Pp . n_Pq)) ]

with d the absolute point-to-plane distance, N(p) the 4-neighborhood
inside the roof mask, and ordered neighbor pairs each counted once.
Outlier cells contribute the fixed penalty and no pairwise terms.  The
cross-label cost is 0 on the diagonal and in [1, 2] off it, so expansion
moves reduce to exact binary min-cuts.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np

from .grids import HeightGrid
from .mincut import solve_binary

logger = logging.getLogger(__name__)

OUTLIER = -1


class SegmentationError(ValueError):
    pass


@dataclass(frozen=True)
class Plane:
    """Oriented plane {x : normal . x = offset} with unit, upward normal."""

    normal: np.ndarray
    offset: float

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=np.float64)
        norm = np.linalg.norm(n)
        if abs(norm - 1.0) > 1e-9:
            raise SegmentationError(f"plane normal must be unit length, |n| = {norm}")
        if n[2] <= 0:
            raise SegmentationError("plane normal must point upward (n_z > 0)")
        object.__setattr__(self, "normal", n)
        object.__setattr__(self, "offset", float(self.offset))

    def distance(self, points: np.ndarray) -> np.ndarray:
        return np.abs(points @ self.normal - self.offset)

    @property
    def pitch_deg(self) -> float:
        return float(np.degrees(np.arccos(np.clip(self.normal[2], -1.0, 1.0))))

    @property
    def azimuth_deg(self) -> float:
        """Compass direction the slope faces (downhill); 0 for flat planes."""
        nx, ny = self.normal[0], self.normal[1]
        if np.hypot(nx, ny) < 1e-12:
            return 0.0
        return float(np.degrees(np.arctan2(nx, ny)) % 360.0)


def fit_plane(points: np.ndarray) -> Plane | None:
    """Total-least-squares plane through >= 3 points; None if degenerate."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.shape[0] < 3:
        return None
    centroid = pts.mean(axis=0)
    _, s, vt = np.linalg.svd(pts - centroid, full_matrices=False)
    if s[1] < 1e-12:  # collinear
        return None
    n = vt[-1]
    if abs(n[2]) < 1e-9:  # vertical plane cannot be a roof facet
        return None
    if n[2] < 0:
        n = -n
    n = n / np.linalg.norm(n)
    return Plane(n, float(np.dot(n, centroid)))


def plane_from_3(points: np.ndarray) -> Plane | None:
    p1, p2, p3 = points
    n = np.cross(p2 - p1, p3 - p1)
    norm = np.linalg.norm(n)
    if norm < 1e-12:
        return None
    n = n / norm
    if abs(n[2]) < 1e-9:
        return None
    if n[2] < 0:
        n = -n
    return Plane(n, float(np.dot(n, p1)))


@dataclass(frozen=True)
class SegmentConfig:
    ransac_inlier_threshold: float = 0.05  # meters
    ransac_iterations: int = 300
    min_inlier_count: int = 12
    max_planes: int = 8
    smoothness_weight: float = 0.5  # m in the energy
    refit_rounds: int = 3
    min_segment_area: float = 1.0  # m^2
    max_pitch: float = 60.0  # degrees
    outlier_penalty: float | None = None  # default: 3 x inlier threshold

    def __post_init__(self):
        if min(self.ransac_inlier_threshold, self.min_segment_area) <= 0:
            raise SegmentationError("thresholds must be positive")
        if min(self.ransac_iterations, self.min_inlier_count, self.max_planes,
               self.refit_rounds) <= 0:
            raise SegmentationError("iteration/count parameters must be positive")
        if not 0 < self.max_pitch < 90:
            raise SegmentationError("max_pitch must be in (0, 90)")
        if self.smoothness_weight < 0:
            raise SegmentationError("smoothness_weight must be >= 0")

    @property
    def resolved_outlier_penalty(self) -> float:
        if self.outlier_penalty is not None:
            return self.outlier_penalty
        return 3.0 * self.ransac_inlier_threshold


@dataclass
class SegmentationState:
    """Assignment of roof cells to planes plus the energy parameters."""

    points: np.ndarray          # (N, 3) world coordinates of roof cells
    cells: np.ndarray           # (N, 2) row/col of each point
    edges: np.ndarray           # (M, 2) 4-neighbor index pairs within the roof
    assignment: np.ndarray      # (N,) plane index or OUTLIER
    planes: list[Plane]
    smoothness_weight: float
    outlier_penalty: float

    def distances(self) -> np.ndarray:
        """(N, P) point-to-plane distance matrix."""
        if not self.planes:
            return np.zeros((len(self.points), 0))
        return np.stack([p.distance(self.points) for p in self.planes], axis=1)


def roof_edges(cells: np.ndarray) -> np.ndarray:
    """4-neighbor pairs (as indices into ``cells``) within the cell set."""
    cells = np.asarray(cells)
    index = {(int(r), int(c)): i for i, (r, c) in enumerate(cells)}
    edges = []
    for i, (r, c) in enumerate(cells):
        for dr, dc in ((0, 1), (1, 0)):
            j = index.get((int(r) + dr, int(c) + dc))
            if j is not None:
                edges.append((i, j))
    return np.array(edges, dtype=np.int64).reshape(-1, 2)


def _pair_cost_table(planes: list[Plane], m: float) -> np.ndarray:
    """(P+1, P+1) cross-label cost; index P stands for OUTLIER (free)."""
    p = len(planes)
    table = np.zeros((p + 1, p + 1))
    for a in range(p):
        for b in range(p):
            if a != b:
                dot = float(np.dot(planes[a].normal, planes[b].normal))
                table[a, b] = m * (1.0 + max(0.0, dot))
    return table


def eq1_energy(state: SegmentationState) -> float:
    """Total assignment energy (data + cross-label smoothness)."""
    assign = state.assignment
    data = 0.0
    if state.planes:
        dist = state.distances()
        assigned = assign >= 0
        data += float(dist[np.nonzero(assigned)[0], assign[assigned]].sum())
    data += state.outlier_penalty * np.count_nonzero(assign == OUTLIER)
    if len(state.edges) == 0:
        return data
    table = _pair_cost_table(state.planes, state.smoothness_weight)
    a = np.where(assign[state.edges[:, 0]] == OUTLIER, len(state.planes), assign[state.edges[:, 0]])
    b = np.where(assign[state.edges[:, 1]] == OUTLIER, len(state.planes), assign[state.edges[:, 1]])
    # stored edges are unordered; the energy counts both ordered directions
    pairwise = 2.0 * float(table[a, b].sum())
    return data + pairwise


def alpha_expansion(state: SegmentationState, alpha: int) -> SegmentationState:
    """One exact expansion move: each cell keeps its label or switches to alpha.

    The resulting energy is never above the input energy.
    """
    if not 0 <= alpha < len(state.planes):
        raise SegmentationError(f"alpha {alpha} out of range")
    assign = state.assignment
    n = len(state.points)
    dist = state.distances()
    keep_cost = np.where(
        assign >= 0,
        dist[np.arange(n), np.where(assign >= 0, assign, 0)],
        state.outlier_penalty,
    )
    alpha_cost = dist[:, alpha]

    table = _pair_cost_table(state.planes, state.smoothness_weight)
    p_out = len(state.planes)
    lab = np.where(assign == OUTLIER, p_out, assign)
    if len(state.edges):
        u, v = state.edges[:, 0], state.edges[:, 1]
        # binary tables, label 1 = "switch to alpha"; x2 for ordered pairs
        e00 = 2.0 * table[lab[u], lab[v]]
        e01 = 2.0 * table[lab[u], alpha]
        e10 = 2.0 * table[alpha, lab[v]]
        e11 = np.zeros(len(u))
        take = solve_binary(keep_cost, alpha_cost, state.edges, e00, e01, e10, e11)
    else:
        take = alpha_cost < keep_cost
    new_assign = np.where(take, alpha, assign)
    return replace(state, assignment=new_assign.astype(np.int64))


def outlier_sweep(state: SegmentationState) -> SegmentationState:
    """Greedy exact pass that demotes cells to OUTLIER where that lowers energy.

    Expansion moves can only take cells away from OUTLIER (expanding the
    outlier label itself is not submodular under this energy), so this
    cell-by-cell pass covers the reverse direction.  Each accepted move
    strictly lowers the energy; sweep order is fixed for determinism.
    """
    if not state.planes:
        return state
    assign = state.assignment.copy()
    dist = state.distances()
    table = _pair_cost_table(state.planes, state.smoothness_weight)
    p_out = len(state.planes)
    neighbors: list[list[int]] = [[] for _ in range(len(state.points))]
    for u, v in state.edges:
        neighbors[u].append(v)
        neighbors[v].append(u)
    changed = True
    while changed:
        changed = False
        for i in range(len(assign)):
            li = assign[i]
            if li == OUTLIER:
                continue
            pair_cost = 0.0
            for q in neighbors[i]:
                lq = assign[q] if assign[q] != OUTLIER else p_out
                pair_cost += 2.0 * table[li, lq]
            if state.outlier_penalty < dist[i, li] + pair_cost - 1e-12:
                assign[i] = OUTLIER
                changed = True
    return replace(state, assignment=assign)


def refit_planes(state: SegmentationState) -> SegmentationState:
    """Least-squares refit of each plane on its cells; tiny labels dissolve.

    A refit plane is kept only if it does not increase the absolute-
    distance data term on its own cells (least squares optimizes the
    squared objective, which is not quite the energy's L1 term).
    """
    new_planes: list[Plane] = []
    remap = np.full(len(state.planes), OUTLIER, dtype=np.int64)
    assign = state.assignment.copy()
    for k, plane in enumerate(state.planes):
        sel = assign == k
        count = int(sel.sum())
        if count < 3:
            assign[sel] = OUTLIER
            continue
        pts = state.points[sel]
        candidate = fit_plane(pts)
        chosen = plane
        if candidate is not None:
            if candidate.distance(pts).sum() <= plane.distance(pts).sum():
                chosen = candidate
        remap[k] = len(new_planes)
        new_planes.append(chosen)
    keep = assign >= 0
    assign[keep] = remap[assign[keep]]
    return replace(state, planes=new_planes, assignment=assign)


def ransac_planes(
    points: np.ndarray,
    cfg: SegmentConfig,
    rng: np.random.Generator | None = None,
) -> list[Plane]:
    """Sequential RANSAC plane extraction.

    Repeatedly finds the plane with the most inliers among the remaining
    points, refits it by least squares on those inliers, removes them,
    and continues until ``max_planes`` or no qualifying plane remains.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.shape[0] < 3:
        raise SegmentationError(f"RANSAC needs at least 3 points, got {pts.shape[0]}")
    rng = rng or np.random.default_rng(0)
    remaining = np.arange(pts.shape[0])
    planes: list[Plane] = []
    while len(planes) < cfg.max_planes and len(remaining) >= max(3, cfg.min_inlier_count):
        best_inliers = None
        for _ in range(cfg.ransac_iterations):
            sample = rng.choice(remaining, size=3, replace=False)
            cand = plane_from_3(pts[sample])
            if cand is None:
                continue
            d = cand.distance(pts[remaining])
            inliers = remaining[d <= cfg.ransac_inlier_threshold]
            if best_inliers is None or len(inliers) > len(best_inliers):
                best_inliers = inliers
        if best_inliers is None or len(best_inliers) < cfg.min_inlier_count:
            break
        refit = fit_plane(pts[best_inliers])
        if refit is None:
            break
        planes.append(refit)
        keep = refit.distance(pts[remaining]) > cfg.ransac_inlier_threshold
        remaining = remaining[keep]
    return planes


def expand_until_stable(
    state: SegmentationState,
    max_sweeps: int = 50,
    order: tuple[int, ...] | None = None,
) -> SegmentationState:
    """Alternate full expansion sweeps and outlier passes until a fixed point."""
    sweep = tuple(order) if order is not None else tuple(range(len(state.planes)))
    for _ in range(max_sweeps):
        before = state.assignment
        for alpha in sweep:
            state = alpha_expansion(state, alpha)
        state = outlier_sweep(state)
        if np.array_equal(before, state.assignment):
            break
    return state


def expand_multistart(state: SegmentationState) -> SegmentationState:
    """Expansion to convergence from several inits and sweep orders.

    Starts: the state's own assignment, the per-cell nearest plane, and
    each constant labeling; sweep orders: every rotation of the plane
    list.  Returns the lowest-energy fixed point, escaping the uniform
    local optima a single expansion run can fall into on small ambiguous
    instances.
    """
    n = len(state.points)
    p = len(state.planes)
    dist = state.distances()
    starts = [state.assignment]
    if p:
        nearest = np.where(
            dist.min(axis=1) <= state.outlier_penalty, dist.argmin(axis=1), OUTLIER
        ).astype(np.int64)
        starts.append(nearest)
        starts.extend(np.full(n, k, dtype=np.int64) for k in range(p))
    orders = [tuple((np.arange(p) + r) % p) for r in range(max(1, p))]
    best_state = None
    best_energy = np.inf
    for init in starts:
        for order in orders:
            cand = expand_until_stable(replace(state, assignment=init.copy()), order=order)
            e = eq1_energy(cand)
            if e < best_energy - 1e-12:
                best_energy = e
                best_state = cand
    return best_state


@dataclass(frozen=True)
class RoofSegment:
    """A planar roof facet and the grid cells assigned to it."""

    plane: Plane
    cells: np.ndarray  # (K, 2) row/col
    area_m2: float
    pitch_deg: float
    azimuth_deg: float


def build_state(
    dsm: HeightGrid,
    cells: np.ndarray,
    planes: list[Plane],
    cfg: SegmentConfig,
) -> SegmentationState:
    """Initial state: each cell takes its cheapest plane or OUTLIER."""
    cells = np.asarray(cells, dtype=np.int64).reshape(-1, 2)
    points = dsm.cell_points(cells[:, 0], cells[:, 1])
    state = SegmentationState(
        points=points,
        cells=cells,
        edges=roof_edges(cells),
        assignment=np.full(len(cells), OUTLIER, dtype=np.int64),
        planes=list(planes),
        smoothness_weight=cfg.smoothness_weight,
        outlier_penalty=cfg.resolved_outlier_penalty,
    )
    if planes:
        dist = state.distances()
        best = dist.argmin(axis=1)
        best_d = dist[np.arange(len(cells)), best]
        state.assignment = np.where(
            best_d <= state.outlier_penalty, best, OUTLIER
        ).astype(np.int64)
    return state


def segment_roof(
    dsm: HeightGrid,
    footprint_cells: np.ndarray,
    cfg: SegmentConfig | None = None,
    seed: int = 0,
) -> list[RoofSegment]:
    """Full segmentation of one building: RANSAC, expansion sweeps, refits.

    Returns the filtered segments; obstacle cells (outliers and cells of
    dissolved or filtered planes) belong to no segment.
    """
    cfg = cfg or SegmentConfig()
    cells = np.asarray(footprint_cells, dtype=np.int64).reshape(-1, 2)
    if len(cells) == 0:
        raise SegmentationError("footprint is empty")
    rng = np.random.default_rng(seed)
    points = dsm.cell_points(cells[:, 0], cells[:, 1])
    try:
        planes = ransac_planes(points, cfg, rng)
    except SegmentationError:
        raise
    if not planes:
        logger.info("no plane met min_inlier_count=%d; building skipped", cfg.min_inlier_count)
        return []
    state = build_state(dsm, cells, planes, cfg)
    for _ in range(cfg.refit_rounds):
        for alpha in range(len(state.planes)):
            state = alpha_expansion(state, alpha)
        state = outlier_sweep(state)
        state = refit_planes(state)
        if not state.planes:
            return []

    cell_area = dsm.cell_size * dsm.cell_size
    segments = []
    for k, plane in enumerate(state.planes):
        sel = state.assignment == k
        count = int(sel.sum())
        area = count * cell_area
        if area < cfg.min_segment_area or plane.pitch_deg > cfg.max_pitch:
            continue
        segments.append(RoofSegment(
            plane=plane,
            cells=state.cells[sel],
            area_m2=area,
            pitch_deg=plane.pitch_deg,
            azimuth_deg=plane.azimuth_deg,
        ))
    return segments
