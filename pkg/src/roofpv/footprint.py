"""Building footprint refinement via binary graph cuts.

Each building id is refined independently: a min-cut on a dilated crop
around the rough footprint fuses building-probability evidence (unary
terms) with DSM height discontinuities (pairwise terms that are cheap to
cut across height jumps).  A distance corridor keeps neighboring ids
separate, so two abutting houses can never merge.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .grids import GridError, HeightGrid, ProbabilityGrid
from .mincut import MinCutError, solve_binary

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RefineConfig:
    unary_weight: float = 1.0
    pairwise_weight: float = 1.0
    height_discontinuity_scale: float = 0.5  # meters
    probability_floor: float = 1e-3
    dilation_radius: int = 20  # cells; bounds per-building cut size

    def __post_init__(self):
        if min(self.unary_weight, self.pairwise_weight) < 0:
            raise ValueError("weights must be >= 0")
        if self.height_discontinuity_scale <= 0:
            raise ValueError("height_discontinuity_scale must be > 0")
        if not 0 < self.probability_floor < 0.5:
            raise ValueError("probability_floor must be in (0, 0.5)")


@dataclass
class FootprintSet:
    """Integer label grid (0 = background) with per-building bounding boxes."""

    labels: np.ndarray
    bboxes: dict[int, tuple[int, int, int, int]]  # id -> (rmin, cmin, rmax, cmax) inclusive

    @classmethod
    def from_labels(cls, labels: np.ndarray) -> "FootprintSet":
        labels = np.asarray(labels, dtype=np.int32)
        bboxes = {}
        for bid in np.unique(labels):
            if bid == 0:
                continue
            rr, cc = np.nonzero(labels == bid)
            bboxes[int(bid)] = (int(rr.min()), int(cc.min()), int(rr.max()), int(cc.max()))
        return cls(labels, bboxes)

    @property
    def ids(self) -> list[int]:
        return sorted(self.bboxes)

    def cells(self, bid: int) -> np.ndarray:
        rr, cc = np.nonzero(self.labels == bid)
        return np.stack([rr, cc], axis=1)


def grid_4_edges(h: int, w: int) -> np.ndarray:
    """(M, 2) node-index pairs for right and down 4-neighbor edges."""
    idx = np.arange(h * w).reshape(h, w)
    right = np.stack([idx[:, :-1].ravel(), idx[:, 1:].ravel()], axis=1)
    down = np.stack([idx[:-1, :].ravel(), idx[1:, :].ravel()], axis=1)
    return np.concatenate([right, down], axis=0)


def binary_min_cut(
    unary: np.ndarray,
    pairwise_right: np.ndarray,
    pairwise_down: np.ndarray,
) -> np.ndarray:
    """Globally optimal binary labeling of a 4-connected grid.

    ``unary`` is (H, W, 2): cost of labels 0 and 1 per cell.
    ``pairwise_right``/(H, W-1) and ``pairwise_down``/(H-1, W) are Potts
    costs paid when the two neighbors take different labels.
    All costs must be finite and >= 0.
    """
    unary = np.asarray(unary, dtype=np.float64)
    if unary.ndim != 3 or unary.shape[2] != 2:
        raise MinCutError(f"unary must be (H, W, 2), got {unary.shape}")
    h, w = unary.shape[:2]
    pr = np.asarray(pairwise_right, dtype=np.float64)
    pd = np.asarray(pairwise_down, dtype=np.float64)
    if pr.shape != (h, w - 1) or pd.shape != (h - 1, w):
        raise MinCutError("pairwise cost shapes do not match the grid")
    for arr in (unary, pr, pd):
        if not np.all(np.isfinite(arr)):
            raise MinCutError("costs must be finite")
        if np.any(arr < 0):
            raise MinCutError("costs must be >= 0")
    edges = grid_4_edges(h, w)
    wts = np.concatenate([pr.ravel(), pd.ravel()])
    zeros = np.zeros_like(wts)
    labels = solve_binary(
        unary[..., 0].ravel(), unary[..., 1].ravel(), edges, zeros, wts, wts, zeros
    )
    return labels.reshape(h, w)


def _refine_one(
    bid: int,
    dsm: HeightGrid,
    footprints: FootprintSet,
    probs: ProbabilityGrid,
    cfg: RefineConfig,
) -> tuple[np.ndarray, np.ndarray] | None:
    """Return (rows, cols) of the refined cells for one building id."""
    labels = footprints.labels
    own = labels == bid
    if not own.any():
        return None
    rmin, cmin, rmax, cmax = footprints.bboxes[bid]
    d = cfg.dilation_radius
    h, w = labels.shape
    r0, r1 = max(0, rmin - d), min(h, rmax + 1 + d)
    c0, c1 = max(0, cmin - d), min(w, cmax + 1 + d)
    crop = np.s_[r0:r1, c0:c1]

    own_c = own[crop]
    others_c = (labels[crop] != 0) & ~own_c
    d_self = ndimage.distance_transform_edt(~own_c)
    if others_c.any():
        d_other = ndimage.distance_transform_edt(~others_c)
    else:
        d_other = np.full(own_c.shape, np.inf)
    corridor = d_self < d_other

    p = np.clip(probs.values[crop], cfg.probability_floor, 1.0 - cfg.probability_floor)
    unary = np.stack([
        cfg.unary_weight * -np.log1p(-p),  # cost of background where p is high
        cfg.unary_weight * -np.log(p),     # cost of building where p is low
    ], axis=-1)

    z = dsm.values[crop]
    dh_r = np.abs(np.diff(z, axis=1))
    dh_d = np.abs(np.diff(z, axis=0))
    scale = cfg.height_discontinuity_scale
    pw_r = cfg.pairwise_weight * np.exp(-np.nan_to_num(dh_r, nan=np.inf) / scale)
    pw_d = cfg.pairwise_weight * np.exp(-np.nan_to_num(dh_d, nan=np.inf) / scale)

    cut = binary_min_cut(unary, pw_r, pw_d)
    keep = cut & corridor
    if not keep.any():
        return None
    comp, n_comp = ndimage.label(keep)  # 4-connectivity default
    good = np.unique(comp[own_c & keep])
    good = good[good != 0]
    if len(good) == 0:
        return None
    keep = np.isin(comp, good)
    rr, cc = np.nonzero(keep)
    return rr + r0, cc + c0


def refine_footprints(
    dsm: HeightGrid,
    footprints: FootprintSet,
    probs: ProbabilityGrid,
    cfg: RefineConfig | None = None,
) -> FootprintSet:
    """Refine every building id against probability and height evidence.

    Per-id results are merged in ascending id order; the distance
    corridor makes per-id regions disjoint, so merge order only matters
    for reproducibility, not correctness.
    """
    cfg = cfg or RefineConfig()
    if dsm.shape != probs.shape or dsm.shape != footprints.labels.shape:
        raise GridError("dsm, probabilities and footprints must share geometry")
    out = np.zeros_like(footprints.labels)
    for bid in footprints.ids:
        res = _refine_one(bid, dsm, footprints, probs, cfg)
        if res is None:
            logger.warning("building %d vanished during refinement; dropped", bid)
            continue
        rr, cc = res
        out[rr, cc] = bid
    return FootprintSet.from_labels(out)
