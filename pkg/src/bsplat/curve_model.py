"""Cubic Bezier primitives and the differentiable map from control points to
sample points.

Two curve flavors exist:

* open strokes: 3 cubic segments chained end to end (segment k's last control
  point is segment k+1's first), 10 unique control points, plus a learnable
  width, an RGB color and one opacity per segment;
* closed regions: 2 cubic segments sharing both endpoints, 6 unique control
  points, plus an RGB color and 3 opacities interpolated across the enclosed
  area. Interior coverage comes from R extra segments interpolated between the
  two boundaries at boundary-dense parameter values.

All curve-space operations are pure functions of their inputs; the evaluation
is plain Bernstein-form (a precomputable K x 4 weight matrix), with De
Casteljau kept around as the independent test oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


DEGREE = 3                      # cubic segments
SEGMENT_POINTS = DEGREE + 1
STROKE_SEGMENTS = 3
STROKE_POINTS = 10              # 3 chained cubics sharing endpoints
REGION_POINTS = 6               # 2 cubics sharing both endpoints

# index spans of each stroke segment inside the 10-point layout
STROKE_SPANS = ((0, 4), (3, 7), (6, 10))
# unique-point indices of the two region boundaries (shared endpoints 0 and 3)
REGION_A_IDX = (0, 1, 2, 3)
REGION_B_IDX = (0, 4, 5, 3)


def bernstein(j: int, m: int, t):
    """Bernstein basis value C(m,j) * (1-t)^(m-j) * t^j.

    ``t`` may be a scalar or array and is clamped to [0, 1]; an out-of-range
    ``j`` raises ValueError. At fixed t the m+1 basis values sum to 1.
    """
    if not 0 <= j <= m:
        raise ValueError(f"basis index j={j} outside 0..{m}")
    t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
    out = math.comb(m, j) * (1.0 - t) ** (m - j) * t**j
    return float(out) if out.ndim == 0 else out


def bernstein_matrix(ts) -> np.ndarray:
    """Cubic Bernstein weights at the given parameters, shape (len(ts), 4).

    Row k holds B_j(t_k); sampling a segment is then ``W @ P`` and the
    adjoint is ``W.T @ dP``.
    """
    t = np.asarray(ts, dtype=float)[:, None]
    j = np.arange(DEGREE + 1)[None, :]
    comb = np.array([math.comb(DEGREE, jj) for jj in range(DEGREE + 1)])
    return comb * (1.0 - t) ** (DEGREE - j) * t**j


def uniform_ts(k: int) -> np.ndarray:
    """K parameters uniform in [0,1] including both endpoints."""
    if k < 2:
        raise ValueError(f"need at least 2 samples per segment, got {k}")
    return np.linspace(0.0, 1.0, k)


def de_casteljau(points, t: float) -> np.ndarray:
    """Evaluate a Bezier curve of any degree by repeated linear interpolation.

    Numerically stable reference evaluator; used as the oracle for the
    Bernstein-form hot path.
    """
    pts = np.asarray(points, dtype=float).copy()
    n = len(pts) - 1
    for r in range(1, n + 1):
        pts[: n - r + 1] = (1.0 - t) * pts[: n - r + 1] + t * pts[1 : n - r + 2]
    return pts[0]


def eval_segment(seg, t) -> np.ndarray:
    """Point on a cubic segment at parameter t (Bernstein form).

    Endpoints are reproduced exactly at t=0 and t=1 because the basis there
    is exactly (1,0,0,0) / (0,0,0,1).
    """
    pts = _segment_points(seg)
    w = bernstein_matrix(np.atleast_1d(t))
    out = w @ pts
    return out[0] if np.isscalar(t) or np.ndim(t) == 0 else out


def sample_points(seg, k: int) -> np.ndarray:
    """K points uniform in parameter along a segment, endpoints included."""
    pts = _segment_points(seg)
    return bernstein_matrix(uniform_ts(k)) @ pts


def cdf_t_values(r: int) -> np.ndarray:
    """R interior parameters in (0,1), symmetric and denser toward 0 and 1.

    Quantiles of the sin^2 ramp: t_k = sin^2(pi * u_k / 2) with
    u_k = k/(R+1). The derivative of the map vanishes at both ends, so the
    interpolated boundary-adjacent curves sit close to the boundaries and
    their gaussians get small cross-curve scales.
    """
    if r < 1:
        raise ValueError(f"need at least one interior value, got {r}")
    u = np.arange(1, r + 1) / (r + 1)
    return np.sin(np.pi * u / 2.0) ** 2


def region_row_ts(r: int) -> np.ndarray:
    """Interpolation parameters for all R+2 region rows: 0, cdf values, 1."""
    if r == 0:
        return np.array([0.0, 1.0])
    return np.concatenate([[0.0], cdf_t_values(r), [1.0]])


def interpolate_region_curves(region: "ClosedRegion", r: int) -> np.ndarray:
    """All R+2 segments of a closed region, shape (R+2, 4, 2).

    Row 0 is boundary_a, row R+1 is boundary_b, and interior row k has
    control points (1-t_k) * A_j + t_k * B_j at the boundary-dense t_k.
    Linear in both boundaries' control points, hence differentiable.
    """
    ts = region_row_ts(r)
    pa, pb = region.boundary_a, region.boundary_b
    return (1.0 - ts)[:, None, None] * pa + ts[:, None, None] * pb


def sample_region_points(region: "ClosedRegion", r: int, k: int) -> np.ndarray:
    """Sample grid over a closed region, shape (R+2, K, 2).

    Row i holds K uniform-parameter samples of interpolated segment i; rows 0
    and R+1 lie exactly on the boundary segments.
    """
    segs = interpolate_region_curves(region, r)
    w = bernstein_matrix(uniform_ts(k))
    return np.einsum("kj,rjd->rkd", w, segs)


def _segment_points(seg) -> np.ndarray:
    pts = seg.points if isinstance(seg, BezierSegment) else np.asarray(seg, dtype=float)
    if pts.shape != (SEGMENT_POINTS, 2):
        raise ValueError(f"cubic segment needs shape (4, 2), got {pts.shape}")
    return pts


# ---------------------------------------------------------------------------
# curve containers
# ---------------------------------------------------------------------------

@dataclass
class BezierSegment:
    """One cubic segment: exactly 4 control points, shape (4, 2)."""

    points: np.ndarray

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float)
        if self.points.shape != (SEGMENT_POINTS, 2):
            raise ValueError(f"cubic segment needs 4 control points, got {self.points.shape}")


@dataclass
class OpenStroke:
    """Open curve: 10 unique control points, width, color, 3 segment opacities.

    ``points[0:4]``, ``points[3:7]`` and ``points[6:10]`` are the three
    segments; the overlap indices 3 and 6 realize the shared-endpoint
    invariant (one storage slot, two segments).
    """

    points: np.ndarray
    width: float = 2.0
    color: np.ndarray = field(default_factory=lambda: np.zeros(3))
    opacities: np.ndarray = field(default_factory=lambda: np.full(3, 0.9))

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float)
        self.color = np.asarray(self.color, dtype=float)
        self.opacities = np.asarray(self.opacities, dtype=float)
        if self.points.shape != (STROKE_POINTS, 2):
            raise ValueError(f"open stroke needs 10 control points, got {self.points.shape}")
        if self.width <= 0:
            raise ValueError("stroke width must be > 0")

    @property
    def segments(self) -> list[np.ndarray]:
        return [self.points[a:b] for a, b in STROKE_SPANS]


@dataclass
class ClosedRegion:
    """Closed curve: two cubic boundaries sharing both endpoints.

    Unique-point layout (6, 2): index 0 = shared start, 1..2 = boundary_a
    interior, 3 = shared end, 4..5 = boundary_b interior.
    """

    points: np.ndarray
    color: np.ndarray = field(default_factory=lambda: np.zeros(3))
    opacities: np.ndarray = field(default_factory=lambda: np.full(3, 0.9))

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float)
        self.color = np.asarray(self.color, dtype=float)
        self.opacities = np.asarray(self.opacities, dtype=float)
        if self.points.shape != (REGION_POINTS, 2):
            raise ValueError(f"closed region needs 6 control points, got {self.points.shape}")

    @property
    def boundary_a(self) -> np.ndarray:
        return self.points[list(REGION_A_IDX)]

    @property
    def boundary_b(self) -> np.ndarray:
        return self.points[list(REGION_B_IDX)]


class CurveSet:
    """A complete vector graphic: stacked parameter arrays plus canvas data.

    Parameters are stored struct-of-arrays (float64) so the optimizer and the
    sampler work on whole-set tensors; ``stroke(i)`` / ``region(i)`` give
    per-curve views into the same storage. Global curve indexing is strokes
    first, then regions.
    """

    def __init__(self, canvas_w: int, canvas_h: int, background=(1.0, 1.0, 1.0)):
        self.canvas_w = int(canvas_w)
        self.canvas_h = int(canvas_h)
        self.background = np.asarray(background, dtype=float)
        self.stroke_points = np.zeros((0, STROKE_POINTS, 2))
        self.stroke_widths = np.zeros(0)
        self.stroke_colors = np.zeros((0, 3))
        self.stroke_opacities = np.zeros((0, 3))
        self.region_points = np.zeros((0, REGION_POINTS, 2))
        self.region_colors = np.zeros((0, 3))
        self.region_opacities = np.zeros((0, 3))

    # -- construction -------------------------------------------------------

    @classmethod
    def from_curves(cls, strokes=(), regions=(), canvas_w=256, canvas_h=256,
                    background=(1.0, 1.0, 1.0)) -> "CurveSet":
        cs = cls(canvas_w, canvas_h, background)
        if strokes:
            cs.stroke_points = np.stack([s.points for s in strokes]).astype(float)
            cs.stroke_widths = np.array([s.width for s in strokes], dtype=float)
            cs.stroke_colors = np.stack([s.color for s in strokes]).astype(float)
            cs.stroke_opacities = np.stack([s.opacities for s in strokes]).astype(float)
        if regions:
            cs.region_points = np.stack([r.points for r in regions]).astype(float)
            cs.region_colors = np.stack([r.color for r in regions]).astype(float)
            cs.region_opacities = np.stack([r.opacities for r in regions]).astype(float)
        return cs

    # -- sizes and access ---------------------------------------------------

    @property
    def n_strokes(self) -> int:
        return len(self.stroke_points)

    @property
    def n_regions(self) -> int:
        return len(self.region_points)

    @property
    def n_curves(self) -> int:
        return self.n_strokes + self.n_regions

    def stroke(self, i: int) -> OpenStroke:
        s = OpenStroke.__new__(OpenStroke)
        s.points = self.stroke_points[i]
        s.width = float(self.stroke_widths[i])
        s.color = self.stroke_colors[i]
        s.opacities = self.stroke_opacities[i]
        return s

    def region(self, i: int) -> ClosedRegion:
        r = ClosedRegion.__new__(ClosedRegion)
        r.points = self.region_points[i]
        r.color = self.region_colors[i]
        r.opacities = self.region_opacities[i]
        return r

    def copy(self) -> "CurveSet":
        cs = CurveSet(self.canvas_w, self.canvas_h, self.background.copy())
        for name in _PARAM_ARRAYS:
            setattr(cs, name, getattr(self, name).copy())
        return cs

    # -- editing (used by the adaptive step) --------------------------------

    def keep(self, stroke_mask=None, region_mask=None) -> "CurveSet":
        """New set containing only the masked-in curves."""
        cs = CurveSet(self.canvas_w, self.canvas_h, self.background.copy())
        sm = slice(None) if stroke_mask is None else np.asarray(stroke_mask, bool)
        rm = slice(None) if region_mask is None else np.asarray(region_mask, bool)
        cs.stroke_points = self.stroke_points[sm].copy()
        cs.stroke_widths = self.stroke_widths[sm].copy()
        cs.stroke_colors = self.stroke_colors[sm].copy()
        cs.stroke_opacities = self.stroke_opacities[sm].copy()
        cs.region_points = self.region_points[rm].copy()
        cs.region_colors = self.region_colors[rm].copy()
        cs.region_opacities = self.region_opacities[rm].copy()
        return cs

    def append(self, strokes=(), regions=()):
        """Append curves in place (new curves land at the end of their mode)."""
        if strokes:
            self.stroke_points = np.concatenate(
                [self.stroke_points, np.stack([s.points for s in strokes])])
            self.stroke_widths = np.concatenate(
                [self.stroke_widths, [s.width for s in strokes]])
            self.stroke_colors = np.concatenate(
                [self.stroke_colors, np.stack([s.color for s in strokes])])
            self.stroke_opacities = np.concatenate(
                [self.stroke_opacities, np.stack([s.opacities for s in strokes])])
        if regions:
            self.region_points = np.concatenate(
                [self.region_points, np.stack([r.points for r in regions])])
            self.region_colors = np.concatenate(
                [self.region_colors, np.stack([r.color for r in regions])])
            self.region_opacities = np.concatenate(
                [self.region_opacities, np.stack([r.opacities for r in regions])])

    def finite(self) -> bool:
        return all(np.isfinite(getattr(self, a)).all() for a in _PARAM_ARRAYS)


_PARAM_ARRAYS = (
    "stroke_points", "stroke_widths", "stroke_colors", "stroke_opacities",
    "region_points", "region_colors", "region_opacities",
)
