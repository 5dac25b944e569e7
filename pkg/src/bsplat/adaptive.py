"""Adaptive curve pruning and densification.

Pruning removes curves that stopped earning their keep: opacity collapsed,
area shrunk to nothing, opacity dipped in the middle (one curve improperly
spanning what should be several), or near-duplicate color with heavy overlap
of a surviving neighbor. Densification then spawns the same number of
circle-initialized curves into the largest connected high-error regions of
the current error map, so the total curve count never changes and the
optimizer gets a global escape hatch from bad spatial allocations.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .curve_model import CurveSet, OpenStroke, ClosedRegion

KAPPA = 0.5523          # cubic circle-approximation control offset ratio
SPAWN_R_MIN = 2.0
FOUR_CONN = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=int)


@dataclass
class PruneCriteria:
    opacity_threshold: float = 0.02
    area_threshold: float = 4.0
    mid_dip_ratio: float = 0.5
    color_sim_threshold: float = 0.05
    aabb_overlap_threshold: float = 0.9

    def __post_init__(self):
        if not 0.0 < self.opacity_threshold < 1.0:
            raise ValueError("opacity_threshold must be in (0, 1)")


@dataclass
class ErrorRegion:
    """One 4-connected component of above-threshold reconstruction error."""

    ys: np.ndarray
    xs: np.ndarray
    area: int
    centroid: tuple[float, float]     # (x, y)
    mean_error: float


@dataclass
class AdaptReport:
    removed: int = 0
    added: int = 0
    reasons: list[tuple[str, int, str]] = field(default_factory=list)
    stroke_keep: np.ndarray | None = None
    region_keep: np.ndarray | None = None


# ---------------------------------------------------------------------------
# pruning
# ---------------------------------------------------------------------------

def prune(curves: CurveSet, areas: np.ndarray, aabbs: np.ndarray,
          criteria: PruneCriteria):
    """Decide removals; returns (stroke_keep, region_keep, reasons).

    ``areas``/``aabbs`` are the per-curve diagnostics from the sampler, in
    global curve order. The redundancy criterion keeps the larger-area curve
    of an offending pair and resolves pairs in ascending index order, which
    makes a second prune with no optimization in between remove nothing.
    """
    ns, nr = curves.n_strokes, curves.n_regions
    n = ns + nr
    opac = np.concatenate([curves.stroke_opacities, curves.region_opacities]) \
        if n else np.zeros((0, 3))
    colors = np.concatenate([curves.stroke_colors, curves.region_colors]) \
        if n else np.zeros((0, 3))

    alive = np.ones(n, bool)
    reasons: list[tuple[str, int, str]] = []

    def mode_idx(i):
        return ("stroke", i) if i < ns else ("region", i - ns)

    low_op = opac.max(axis=1) < criteria.opacity_threshold
    small = areas < criteria.area_threshold
    mid_dip = opac[:, 1] < criteria.mid_dip_ratio * np.minimum(opac[:, 0], opac[:, 2])
    for i in range(n):
        reason = None
        if low_op[i]:
            reason = "opacity"
        elif small[i]:
            reason = "area"
        elif mid_dip[i]:
            reason = "mid-dip"
        if reason:
            alive[i] = False
            m, j = mode_idx(i)
            reasons.append((m, j, reason))

    # redundancy: similar color + heavy AABB overlap with a surviving curve
    if n > 1:
        cand = np.flatnonzero(alive)
        if len(cand) > 1:
            cd = np.linalg.norm(colors[cand, None] - colors[None, cand], axis=-1)
            ov = _overlap_matrix(aabbs[cand])
            ii, jj = np.nonzero((cd < criteria.color_sim_threshold)
                                & (ov > criteria.aabb_overlap_threshold))
            pairs = [(cand[a], cand[b]) for a, b in zip(ii, jj) if a < b]
            for i, j in sorted(pairs):
                if not (alive[i] and alive[j]):
                    continue
                # larger area survives; equal areas keep the earlier curve
                loser = i if areas[i] < areas[j] else (j if areas[j] < areas[i] else j)
                alive[loser] = False
                m, jj_ = mode_idx(loser)
                reasons.append((m, jj_, "overlap"))

    return alive[:ns], alive[ns:], reasons


def _overlap_matrix(boxes: np.ndarray) -> np.ndarray:
    """Pairwise AABB intersection over the smaller box area.

    Boxes are (x0, y0, x1, y1) over gaussian centers, padded by half a pixel
    per side so degenerate (line-thin) boxes still compare sanely.
    """
    b = boxes.copy()
    b[:, :2] -= 0.5
    b[:, 2:] += 0.5
    x0 = np.maximum(b[:, None, 0], b[None, :, 0])
    y0 = np.maximum(b[:, None, 1], b[None, :, 1])
    x1 = np.minimum(b[:, None, 2], b[None, :, 2])
    y1 = np.minimum(b[:, None, 3], b[None, :, 3])
    inter = np.clip(x1 - x0, 0.0, None) * np.clip(y1 - y0, 0.0, None)
    area = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    smaller = np.minimum(area[:, None], area[None, :])
    out = inter / np.maximum(smaller, 1e-12)
    np.fill_diagonal(out, 0.0)
    return out


# ---------------------------------------------------------------------------
# densification
# ---------------------------------------------------------------------------

def find_error_regions(error_map: np.ndarray, threshold: float | None = None
                       ) -> list[ErrorRegion]:
    """Connected components of above-threshold error, largest area first.

    Default threshold is mean + 1 std of the map (scale-free); components
    are 4-connected; ties in area rank by mean error, descending.
    """
    em = np.asarray(error_map, dtype=np.float64)
    if threshold is None:
        threshold = float(em.mean() + em.std())
    mask = em > threshold
    labels, count = ndimage.label(mask, structure=FOUR_CONN)
    if count == 0:
        return []
    flat = labels.ravel()
    areas = np.bincount(flat, minlength=count + 1)
    ys_grid, xs_grid = np.indices(em.shape)
    sum_x = np.bincount(flat, weights=xs_grid.ravel(), minlength=count + 1)
    sum_y = np.bincount(flat, weights=ys_grid.ravel(), minlength=count + 1)
    sum_e = np.bincount(flat, weights=em.ravel(), minlength=count + 1)

    order = np.argsort(flat, kind="stable")
    sorted_ys = ys_grid.ravel()[order]
    sorted_xs = xs_grid.ravel()[order]
    starts = np.concatenate([[0], np.cumsum(areas)])

    regions = []
    for lab in range(1, count + 1):
        a = int(areas[lab])
        s, e = starts[lab], starts[lab] + a
        regions.append(ErrorRegion(
            ys=sorted_ys[s:e], xs=sorted_xs[s:e], area=a,
            centroid=(float(sum_x[lab] / a), float(sum_y[lab] / a)),
            mean_error=float(sum_e[lab] / a)))
    regions.sort(key=lambda r: (-r.area, -r.mean_error))
    return regions


def circle_stroke(center, radius: float, width: float, color, opacities,
                  phase: float = 0.0) -> OpenStroke:
    """Open stroke tracing ~270 degrees of a circle: three 90-degree cubics."""
    cx, cy = center
    pts = np.zeros((10, 2))
    for seg in range(3):
        a0 = phase + seg * (np.pi / 2.0)
        a1 = a0 + np.pi / 2.0
        p0 = np.array([cx + radius * np.cos(a0), cy + radius * np.sin(a0)])
        p3 = np.array([cx + radius * np.cos(a1), cy + radius * np.sin(a1)])
        t0 = np.array([-np.sin(a0), np.cos(a0)])
        t1 = np.array([-np.sin(a1), np.cos(a1)])
        base = seg * 3
        pts[base] = p0
        pts[base + 1] = p0 + KAPPA * radius * t0
        pts[base + 2] = p3 - KAPPA * radius * t1
        pts[base + 3] = p3
    return OpenStroke(points=pts, width=width, color=np.asarray(color, float),
                      opacities=np.asarray(opacities, float))


def circle_region(center, radius: float, color, opacities) -> ClosedRegion:
    """Closed region: two opposite cubic arcs with kappa*r control offsets."""
    cx, cy = center
    off = KAPPA * radius
    pts = np.array([
        [cx - radius, cy],        # shared start
        [cx - radius, cy - off],  # boundary_a interior
        [cx + radius, cy - off],
        [cx + radius, cy],        # shared end
        [cx - radius, cy + off],  # boundary_b interior
        [cx + radius, cy + off],
    ])
    return ClosedRegion(points=pts, color=np.asarray(color, float),
                        opacities=np.asarray(opacities, float))


def spawn_curve(region: ErrorRegion, mode: str, target: np.ndarray,
                rng: np.random.Generator, width: float = 2.0,
                opacity: float = 0.9, r_max: float | None = None,
                center=None):
    """Circle-initialized replacement curve inside an error region.

    Radius sqrt(area / pi) clamped to [2, r_max]; color is the mean target
    color over the region's pixels.
    """
    h, w = target.shape[:2]
    if r_max is None:
        r_max = 0.25 * min(w, h)
    radius = float(np.clip(np.sqrt(region.area / np.pi), SPAWN_R_MIN, r_max))
    color = target[region.ys, region.xs].reshape(len(region.ys), -1).mean(axis=0)
    color = np.resize(color, 3)
    ops = np.full(3, opacity)
    c = region.centroid if center is None else center
    if mode == "open":
        return circle_stroke(c, radius, width, color, ops,
                             phase=float(rng.uniform(0.0, 2.0 * np.pi)))
    return circle_region(c, radius, color, ops)


def adapt(curves: CurveSet, error_map: np.ndarray, criteria: PruneCriteria,
          mode: str, target: np.ndarray, rng: np.random.Generator,
          areas: np.ndarray, aabbs: np.ndarray, width: float = 2.0,
          opacity: float = 0.9):
    """One prune + densify event; curve count is conserved exactly.

    Spawns one curve per top-ranked error region; if removals outnumber
    regions, spawning cycles through the regions with centroid jitter of
    half the region radius. Returns (new CurveSet, AdaptReport).
    """
    stroke_keep, region_keep, reasons = prune(curves, areas, aabbs, criteria)
    removed = int((~stroke_keep).sum() + (~region_keep).sum())
    report = AdaptReport(removed=removed, added=0, reasons=reasons,
                         stroke_keep=stroke_keep, region_keep=region_keep)
    if removed == 0:
        return curves, report

    survivors = curves.keep(stroke_keep, region_keep)
    regions = find_error_regions(error_map)
    if not regions:
        h, w = error_map.shape
        ys, xs = np.indices(error_map.shape)
        regions = [ErrorRegion(ys=ys.ravel(), xs=xs.ravel(), area=h * w,
                               centroid=(w / 2.0, h / 2.0),
                               mean_error=float(error_map.mean()))]

    spawned = []
    for i in range(removed):
        reg = regions[i % len(regions)]
        center = None
        if i >= len(regions):
            r = np.sqrt(reg.area / np.pi)
            jitter = rng.uniform(-0.5 * r, 0.5 * r, size=2)
            center = (reg.centroid[0] + jitter[0], reg.centroid[1] + jitter[1])
        spawned.append(spawn_curve(reg, mode, target, rng, width=width,
                                   opacity=opacity, center=center))
    if mode == "open":
        survivors.append(strokes=spawned)
    else:
        survivors.append(regions=spawned)
    report.added = len(spawned)
    return survivors, report
