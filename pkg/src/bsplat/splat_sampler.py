"""Conversion of sampled curve points into fully parameterized 2D gaussians.

Every gaussian is derived state: its center comes from curve sampling, its
along-curve scale from the distance to the next sample over a density
constant rho, its cross-curve scale from the distance to the corresponding
sample on the adjacent interpolated curve (or the stroke width), its rotation
from the direction between its left and right neighbors, and its opacity from
the owning curve's opacity parameters. Depth is a per-curve sort key equal to
an area measure, so small curves render in front and keep receiving gradient.

``build_batch`` is the vectorized whole-set path used by training; it returns
the depth-sorted flat batch plus a context object holding every intermediate
the hand-written adjoint needs. ``splat_stroke`` / ``splat_region`` are the
per-curve reference surface used by tests and small tools.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .curve_model import (
    CurveSet, OpenStroke, ClosedRegion,
    STROKE_SPANS, bernstein_matrix, uniform_ts, region_row_ts,
)

DEFAULT_SIGMA_FLOOR = 0.3


@dataclass
class Gaussian2D:
    """One splat. ``parent`` is (curve index, row, column) provenance."""

    center: np.ndarray
    sigma_x: float
    sigma_y: float
    theta: float
    color: np.ndarray
    opacity: float
    depth: float
    parent: tuple[int, int, int]


class SplatBatch:
    """Flat struct-of-arrays over all gaussians, sorted front (small depth) first.

    Ties in the depth key are broken by curve index, so the order is total
    and stable. ``curve_id`` indexes the owning curve globally (strokes
    first, then regions).
    """

    def __init__(self, centers, sigma_x, sigma_y, theta, color, opacity,
                 depth, curve_id, row, col):
        self.centers = centers
        self.sigma_x = sigma_x
        self.sigma_y = sigma_y
        self.theta = theta
        self.color = color
        self.opacity = opacity
        self.depth = depth
        self.curve_id = curve_id
        self.row = row
        self.col = col

    def __len__(self) -> int:
        return len(self.centers)

    def gaussian(self, i: int) -> Gaussian2D:
        return Gaussian2D(
            center=self.centers[i].astype(float),
            sigma_x=float(self.sigma_x[i]),
            sigma_y=float(self.sigma_y[i]),
            theta=float(self.theta[i]),
            color=self.color[i].astype(float),
            opacity=float(self.opacity[i]),
            depth=float(self.depth[i]),
            parent=(int(self.curve_id[i]), int(self.row[i]), int(self.col[i])),
        )

    @classmethod
    def from_gaussians(cls, gaussians) -> "SplatBatch":
        """Build a batch from explicit gaussians, sorted by (depth, curve)."""
        gs = sorted(gaussians, key=lambda g: (g.depth, g.parent[0]))
        if not gs:
            z = np.zeros(0)
            return cls(np.zeros((0, 2)), z, z, z, np.zeros((0, 3)), z, z,
                       np.zeros(0, np.int32), np.zeros(0, np.int32), np.zeros(0, np.int32))
        return cls(
            centers=np.array([g.center for g in gs], dtype=float),
            sigma_x=np.array([g.sigma_x for g in gs], dtype=float),
            sigma_y=np.array([g.sigma_y for g in gs], dtype=float),
            theta=np.array([g.theta for g in gs], dtype=float),
            color=np.array([g.color for g in gs], dtype=float),
            opacity=np.array([g.opacity for g in gs], dtype=float),
            depth=np.array([g.depth for g in gs], dtype=float),
            curve_id=np.array([g.parent[0] for g in gs], dtype=np.int32),
            row=np.array([g.parent[1] for g in gs], dtype=np.int32),
            col=np.array([g.parent[2] for g in gs], dtype=np.int32),
        )

    def astype(self, dtype) -> "SplatBatch":
        return SplatBatch(
            self.centers.astype(dtype), self.sigma_x.astype(dtype),
            self.sigma_y.astype(dtype), self.theta.astype(dtype),
            self.color.astype(dtype), self.opacity.astype(dtype),
            self.depth.astype(dtype), self.curve_id, self.row, self.col)


# ---------------------------------------------------------------------------
# scale / rotation rules
# ---------------------------------------------------------------------------

def scales_from_grid(grid, rho: float, sigma_floor: float = DEFAULT_SIGMA_FLOOR):
    """Per-point scales of a region sample grid, both (R+2, K).

    sigma_x(r,k) = |X[r,k+1] - X[r,k]| / rho along each curve and
    sigma_y(r,k) = |X[r+1,k] - X[r,k]| / rho across adjacent curves; the last
    column / row reuses the preceding difference, and everything is clamped
    to the sigma floor (degenerate zero distances included).
    """
    x = np.asarray(grid, dtype=float)
    dx = np.linalg.norm(x[..., :, 1:, :] - x[..., :, :-1, :], axis=-1) / rho
    sx = np.concatenate([dx, dx[..., :, -1:]], axis=-1)
    dy = np.linalg.norm(x[..., 1:, :, :] - x[..., :-1, :, :], axis=-1) / rho
    sy = np.concatenate([dy, dy[..., -1:, :]], axis=-2)
    return np.maximum(sx, sigma_floor), np.maximum(sy, sigma_floor)


def rotations_from_grid(grid) -> np.ndarray:
    """Rotation of each point from its left/right neighbors along the curve.

    theta(r,k) = atan2 of X[r,k+1] - X[r,k-1]; the first and last columns
    align with their single nearest neighbor.
    """
    x = np.asarray(grid, dtype=float)
    d = _neighbor_deltas(x)
    return np.arctan2(d[..., 1], d[..., 0])


def _neighbor_deltas(x: np.ndarray) -> np.ndarray:
    """Left/right neighbor differences along the last-but-one axis."""
    d = np.empty_like(x)
    d[..., 1:-1, :] = x[..., 2:, :] - x[..., :-2, :]
    d[..., 0, :] = x[..., 1, :] - x[..., 0, :]
    d[..., -1, :] = x[..., -1, :] - x[..., -2, :]
    return d


def region_opacity_weights(r: int) -> np.ndarray:
    """(R+2, 3) matrix mapping a region's 3 opacities to per-row opacity.

    Row r sits at u = r/(R+1); opacity is the piecewise-linear interpolation
    through the three values anchored at u = 0, 0.5, 1.
    """
    u = np.arange(r + 2) / (r + 1)
    w = np.zeros((r + 2, 3))
    lo = u <= 0.5
    w[lo, 0] = 1.0 - 2.0 * u[lo]
    w[lo, 1] = 2.0 * u[lo]
    w[~lo, 1] = 2.0 - 2.0 * u[~lo]
    w[~lo, 2] = 2.0 * u[~lo] - 1.0
    return w


# ---------------------------------------------------------------------------
# area measures (depth keys; detached from the gradient graph)
# ---------------------------------------------------------------------------

def stroke_areas(points: np.ndarray, widths: np.ndarray) -> np.ndarray:
    """Control-point bounding-box area times width, shape (N,)."""
    ext = points.max(axis=1) - points.min(axis=1)
    return ext[:, 0] * ext[:, 1] * widths


def region_areas(grid: np.ndarray) -> np.ndarray:
    """Shoelace area of boundary row 0 followed by reversed row R+1, (N,)."""
    poly = np.concatenate([grid[:, 0], grid[:, -1, ::-1]], axis=1)
    x, y = poly[..., 0], poly[..., 1]
    xn, yn = np.roll(x, -1, axis=1), np.roll(y, -1, axis=1)
    return 0.5 * np.abs(np.sum(x * yn - xn * y, axis=1))


def assign_depths(curves: CurveSet, r: int = 20, k: int = 32) -> np.ndarray:
    """Depth key per curve (global order): its area measure.

    Sorting ascending with curve-index tie-break puts smaller curves in
    front, so they are not occluded away during optimization.
    """
    keys = np.zeros(curves.n_curves)
    if curves.n_strokes:
        keys[: curves.n_strokes] = stroke_areas(curves.stroke_points, curves.stroke_widths)
    if curves.n_regions:
        grid = _region_grids(curves.region_points, r, k)
        keys[curves.n_strokes:] = region_areas(grid)
    return keys


# ---------------------------------------------------------------------------
# vectorized whole-set sampling
# ---------------------------------------------------------------------------

@dataclass
class SamplingCtx:
    """Forward intermediates required by the sampling adjoint."""

    k: int
    r: int
    rho: float
    sigma_floor: float
    n_strokes: int
    n_regions: int
    weights: np.ndarray                  # (K, 4) Bernstein matrix
    gather_idx: np.ndarray               # sorted = unsorted[gather_idx]
    areas: np.ndarray                    # (n_curves,)
    aabbs: np.ndarray                    # (n_curves, 4): x0, y0, x1, y1 over centers
    order: np.ndarray                    # curve render order (front first)
    stroke: dict = field(default_factory=dict)
    region: dict = field(default_factory=dict)


def build_batch(curves: CurveSet, k: int = 32, r: int = 20, rho: float = 3.0,
                sigma_floor: float = DEFAULT_SIGMA_FLOOR, dtype=np.float32):
    """Sample every curve of the set into one depth-sorted SplatBatch.

    Returns (batch, ctx); ctx carries the intermediates for
    ``autograd.backward_sampling`` plus per-curve areas/AABBs reused by the
    adaptive step.
    """
    ns, nr = curves.n_strokes, curves.n_regions
    w = bernstein_matrix(uniform_ts(k))
    ctx = SamplingCtx(k=k, r=r, rho=rho, sigma_floor=sigma_floor,
                      n_strokes=ns, n_regions=nr, weights=w,
                      gather_idx=np.zeros(0, np.int64),
                      areas=np.zeros(curves.n_curves),
                      aabbs=np.zeros((curves.n_curves, 4)),
                      order=np.zeros(curves.n_curves, np.int64))

    blocks = []
    if ns:
        blocks.append(_sample_strokes(curves, w, rho, sigma_floor, ctx))
    if nr:
        blocks.append(_sample_regions(curves, w, r, rho, sigma_floor, ctx))

    if not blocks:
        batch = SplatBatch.from_gaussians([])
        return batch.astype(dtype), ctx

    cat = {key: np.concatenate([b[key] for b in blocks]) for key in blocks[0]}
    counts = np.concatenate([np.full(ns, 3 * k, np.int64), np.full(nr, (r + 2) * k, np.int64)])
    offsets = np.concatenate([[0], np.cumsum(counts)])

    # front-to-back curve order: ascending area, curve index breaks ties
    order = np.lexsort((np.arange(curves.n_curves), ctx.areas))
    ctx.order = order
    gather = np.concatenate([np.arange(offsets[c], offsets[c] + counts[c]) for c in order]) \
        if curves.n_curves else np.zeros(0, np.int64)
    ctx.gather_idx = gather

    depth = np.repeat(ctx.areas[order], counts[order])
    batch = SplatBatch(
        centers=cat["centers"][gather].astype(dtype),
        sigma_x=cat["sigma_x"][gather].astype(dtype),
        sigma_y=cat["sigma_y"][gather].astype(dtype),
        theta=cat["theta"][gather].astype(dtype),
        color=cat["color"][gather].astype(dtype),
        opacity=cat["opacity"][gather].astype(dtype),
        depth=depth.astype(dtype),
        curve_id=cat["curve_id"][gather],
        row=cat["row"][gather],
        col=cat["col"][gather],
    )
    return batch, ctx


def _sample_strokes(curves: CurveSet, w, rho, sigma_floor, ctx: SamplingCtx):
    """All stroke gaussians in unsorted (curve-major) order."""
    pts = curves.stroke_points                       # (N, 10, 2)
    n, k = len(pts), w.shape[0]
    segs = np.stack([pts[:, a:b] for a, b in STROKE_SPANS], axis=1)   # (N, 3, 4, 2)
    x = np.einsum("kj,nsjd->nskd", w, segs).reshape(n, 3 * k, 2)

    diff = x[:, 1:] - x[:, :-1]
    dist = np.linalg.norm(diff, axis=-1)
    sx_raw = np.concatenate([dist, dist[:, -1:]], axis=1) / rho
    sx = np.maximum(sx_raw, sigma_floor)
    width = curves.stroke_widths
    sy_raw = np.broadcast_to(width[:, None], (n, 3 * k))
    sy = np.maximum(sy_raw, sigma_floor)

    delta = _neighbor_deltas(x)
    theta = np.arctan2(delta[..., 1], delta[..., 0])

    opacity = np.repeat(curves.stroke_opacities, k, axis=1)           # (N, 3K)
    color = np.repeat(curves.stroke_colors, 3 * k, axis=0)

    ctx.stroke = {
        "x": x, "diff": diff, "dist": dist,
        "sx_pass": sx_raw > sigma_floor, "sy_pass": width > sigma_floor,
        "delta": delta, "delta_sq": np.sum(delta * delta, axis=-1),
    }
    ctx.areas[: n] = stroke_areas(pts, width)
    ctx.aabbs[: n] = np.concatenate([x.min(axis=1), x.max(axis=1)], axis=1)

    seg_idx = np.repeat(np.arange(3, dtype=np.int32), k)
    col_idx = np.tile(np.arange(k, dtype=np.int32), 3)
    return {
        "centers": x.reshape(-1, 2),
        "sigma_x": sx.ravel(),
        "sigma_y": sy.ravel(),
        "theta": theta.ravel(),
        "color": color,
        "opacity": opacity.ravel(),
        "curve_id": np.repeat(np.arange(n, dtype=np.int32), 3 * k),
        "row": np.tile(seg_idx, n),
        "col": np.tile(col_idx, n),
    }


def _region_grids(points: np.ndarray, r: int, k: int) -> np.ndarray:
    """Sample grids (N, R+2, K, 2) for stacked region control points."""
    pa = points[:, [0, 1, 2, 3]]
    pb = points[:, [0, 4, 5, 3]]
    ts = region_row_ts(r)
    rows = (1.0 - ts)[None, :, None, None] * pa[:, None] + ts[None, :, None, None] * pb[:, None]
    w = bernstein_matrix(uniform_ts(k))
    return np.einsum("kj,nrjd->nrkd", w, rows)


def _sample_regions(curves: CurveSet, w, r, rho, sigma_floor, ctx: SamplingCtx):
    """All region gaussians in unsorted (curve-major) order."""
    pts = curves.region_points                       # (N, 6, 2)
    n, k = len(pts), w.shape[0]
    ts = region_row_ts(r)
    pa = pts[:, [0, 1, 2, 3]]
    pb = pts[:, [0, 4, 5, 3]]
    rows = (1.0 - ts)[None, :, None, None] * pa[:, None] + ts[None, :, None, None] * pb[:, None]
    x = np.einsum("kj,nrjd->nrkd", w, rows)          # (N, R+2, K, 2)

    dx = x[:, :, 1:] - x[:, :, :-1]
    distx = np.linalg.norm(dx, axis=-1)
    sx_raw = np.concatenate([distx, distx[:, :, -1:]], axis=2) / rho
    sx = np.maximum(sx_raw, sigma_floor)

    dy = x[:, 1:] - x[:, :-1]
    disty = np.linalg.norm(dy, axis=-1)
    sy_raw = np.concatenate([disty, disty[:, -1:]], axis=1) / rho
    sy = np.maximum(sy_raw, sigma_floor)

    delta = _neighbor_deltas(x)
    theta = np.arctan2(delta[..., 1], delta[..., 0])

    wop = region_opacity_weights(r)                  # (R+2, 3)
    row_op = np.einsum("rj,nj->nr", wop, curves.region_opacities)
    opacity = np.repeat(row_op[:, :, None], k, axis=2)
    color = np.repeat(curves.region_colors, (r + 2) * k, axis=0)

    ctx.region = {
        "x": x, "dx": dx, "distx": distx, "dy": dy, "disty": disty,
        "sx_pass": sx_raw > sigma_floor, "sy_pass": sy_raw > sigma_floor,
        "delta": delta, "delta_sq": np.sum(delta * delta, axis=-1),
        "ts": ts, "wop": wop,
    }
    ns = curves.n_strokes
    ctx.areas[ns:] = region_areas(x)
    flat = x.reshape(n, -1, 2)
    ctx.aabbs[ns:] = np.concatenate([flat.min(axis=1), flat.max(axis=1)], axis=1)

    row_idx = np.repeat(np.arange(r + 2, dtype=np.int32), k)
    col_idx = np.tile(np.arange(k, dtype=np.int32), r + 2)
    return {
        "centers": x.reshape(-1, 2),
        "sigma_x": sx.reshape(n, -1).ravel(),
        "sigma_y": sy.reshape(n, -1).ravel(),
        "theta": theta.reshape(n, -1).ravel(),
        "color": color,
        "opacity": opacity.reshape(n, -1).ravel(),
        "curve_id": np.repeat(np.arange(ns, ns + n, dtype=np.int32), (r + 2) * k),
        "row": np.tile(row_idx, n),
        "col": np.tile(col_idx, n),
    }


# ---------------------------------------------------------------------------
# per-curve reference surface
# ---------------------------------------------------------------------------

def splat_stroke(stroke: OpenStroke, k: int, rho: float,
                 sigma_floor: float = DEFAULT_SIGMA_FLOOR) -> list[Gaussian2D]:
    """3K gaussians along one open stroke.

    sigma_x follows consecutive sample distances over rho; sigma_y is the
    stroke width itself (no rho division); rotation follows the neighbor rule
    along the concatenated 3K-point sequence; opacity is per segment.
    """
    cs = CurveSet.from_curves(strokes=[stroke], canvas_w=1, canvas_h=1)
    batch, _ = build_batch(cs, k=k, r=0, rho=rho, sigma_floor=sigma_floor, dtype=np.float64)
    return [batch.gaussian(i) for i in range(len(batch))]


def splat_region(region: ClosedRegion, r: int, k: int, rho: float,
                 sigma_floor: float = DEFAULT_SIGMA_FLOOR) -> list[Gaussian2D]:
    """(R+2)K gaussians covering one closed region.

    Row opacity is the 3-node linear interpolation at normalized row
    position; row 0 / R+1 centers lie exactly on the boundary segments.
    """
    cs = CurveSet.from_curves(regions=[region], canvas_w=1, canvas_h=1)
    batch, _ = build_batch(cs, k=k, r=r, rho=rho, sigma_floor=sigma_floor, dtype=np.float64)
    return [batch.gaussian(i) for i in range(len(batch))]
