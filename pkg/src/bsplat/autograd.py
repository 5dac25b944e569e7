"""Hand-written reverse-mode gradients for the full rendering chain.

``backward_blend`` turns per-pixel loss gradients into per-gaussian
gradients (center, scales, rotation, color, opacity) by replaying the tiled
forward pass in reverse. ``backward_sampling`` chains those through the
sampling map back to control points, stroke widths, per-curve colors and
opacities. ``check_gradients`` is the module's own oracle: central finite
differences over every scalar parameter, run in float64 with the
piecewise-constant engineering thresholds (culling, early stop) disabled so
the comparison measures the analytic math and not threshold flips.

Non-differentiable points follow projection-subgradient convention: an
active sigma floor or alpha clamp contributes zero, the atan2 adjoint at a
zero neighbor vector is zero, and depth sorting / tile assignment / stop
indices are constants of the backward pass.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .curve_model import CurveSet, STROKE_SPANS
from .rasterizer import RenderBuffer, render, build_tile_index
from .splat_sampler import SamplingCtx, SplatBatch, build_batch


@dataclass
class GaussianGrads:
    """Per-gaussian parameter gradients, in batch (depth-sorted) order."""

    centers: np.ndarray
    sigma_x: np.ndarray
    sigma_y: np.ndarray
    theta: np.ndarray
    color: np.ndarray
    opacity: np.ndarray


@dataclass
class GradientBuffer:
    """Per-curve-parameter gradient accumulators, mirroring CurveSet layout."""

    stroke_points: np.ndarray
    stroke_widths: np.ndarray
    stroke_colors: np.ndarray
    stroke_opacities: np.ndarray
    region_points: np.ndarray
    region_colors: np.ndarray
    region_opacities: np.ndarray

    @classmethod
    def zeros_like(cls, curves: CurveSet) -> "GradientBuffer":
        ns, nr = curves.n_strokes, curves.n_regions
        return cls(
            stroke_points=np.zeros((ns, 10, 2)),
            stroke_widths=np.zeros(ns),
            stroke_colors=np.zeros((ns, 3)),
            stroke_opacities=np.zeros((ns, 3)),
            region_points=np.zeros((nr, 6, 2)),
            region_colors=np.zeros((nr, 3)),
            region_opacities=np.zeros((nr, 3)),
        )

    def arrays(self) -> dict:
        return {k: getattr(self, k) for k in (
            "stroke_points", "stroke_widths", "stroke_colors", "stroke_opacities",
            "region_points", "region_colors", "region_opacities")}

    def finite(self) -> bool:
        return all(np.isfinite(v).all() for v in self.arrays().values())

    def first_nonfinite(self) -> str | None:
        for name, v in self.arrays().items():
            bad = ~np.isfinite(v)
            if bad.any():
                idx = np.argwhere(bad)[0]
                return f"{name}{tuple(int(i) for i in idx)}"
        return None


def backward_blend(batch: SplatBatch, buffer: RenderBuffer,
                   dl_dpixels: np.ndarray) -> GaussianGrads:
    """Exact adjoint of the alpha blend for the given forward buffer.

    The buffer must come from ``render`` on the same batch; its recorded
    per-pixel termination positions are replayed so gaussians skipped by
    early termination receive zero gradient. The conic-space gradients from
    the kernel are chained through the rotation/scale factorization here.
    """
    replay = getattr(buffer, "_replay", None)
    if replay is None or replay["n_gaussians"] != len(batch):
        raise ValueError("buffer was not produced by render() on this batch")
    h, w = replay["height"], replay["width"]
    dl = np.ascontiguousarray(dl_dpixels, dtype=np.float64)
    if dl.shape != (h, w, 3):
        raise ValueError(f"dl_dpixels must have shape {(h, w, 3)}, got {dl.shape}")

    tiles = replay["tiles"]
    p = tiles.prep
    pair_grads = np.zeros((len(tiles.sorted_gauss), 9), np.float64)
    _kernels.backward_kernel(
        tiles.tile_offsets, tiles.sorted_gauss, tiles.tile_size, w, h,
        p["cx"], p["cy"], p["ca"], p["cb"], p["cc"], p["opac"], p["color"],
        p["gy0"], p["gy1"], buffer.background, replay["t_eps"],
        replay["alpha_max"], replay["q_max"],
        replay["trans64"], buffer.term_pos, dl, pair_grads)

    n = len(batch)
    merged = np.empty((n, 9), np.float64)
    for j in range(9):
        merged[:, j] = np.bincount(tiles.sorted_gauss, weights=pair_grads[:, j],
                                   minlength=n)

    # chain conic gradients (dA, dB, dC) -> (d sigma_x, d sigma_y, d theta)
    sx = batch.sigma_x.astype(np.float64)
    sy = batch.sigma_y.astype(np.float64)
    th = batch.theta.astype(np.float64)
    a = 1.0 / (sx * sx)
    b = 1.0 / (sy * sy)
    c, s = np.cos(th), np.sin(th)
    d_a = merged[:, 2] * c * c + merged[:, 3] * c * s + merged[:, 4] * s * s
    d_b = merged[:, 2] * s * s - merged[:, 3] * c * s + merged[:, 4] * c * c
    d_th = (merged[:, 2] * 2 * c * s * (b - a)
            + merged[:, 3] * (a - b) * (c * c - s * s)
            + merged[:, 4] * 2 * c * s * (a - b))
    return GaussianGrads(
        centers=merged[:, 0:2].copy(),
        sigma_x=d_a * (-2.0 / (sx ** 3)),
        sigma_y=d_b * (-2.0 / (sy ** 3)),
        theta=d_th,
        color=merged[:, 5:8].copy(),
        opacity=merged[:, 8].copy(),
    )


# ---------------------------------------------------------------------------
# adjoint of the sampling map
# ---------------------------------------------------------------------------

def _theta_to_points(d_theta, delta, delta_sq):
    """Scatter atan2 gradients to the sample points along the last curve axis.

    d atan2(dy, dx) = (-dy, dx) / (dx^2 + dy^2); zero where both neighbors
    coincide.
    """
    inv = np.where(delta_sq > 0.0, 1.0 / np.where(delta_sq > 0.0, delta_sq, 1.0), 0.0)
    d_delta = np.stack([-delta[..., 1], delta[..., 0]], axis=-1) * (d_theta * inv)[..., None]
    dx = np.zeros(delta.shape)
    dx[..., 2:, :] += d_delta[..., 1:-1, :]
    dx[..., :-2, :] -= d_delta[..., 1:-1, :]
    dx[..., 1, :] += d_delta[..., 0, :]
    dx[..., 0, :] -= d_delta[..., 0, :]
    dx[..., -1, :] += d_delta[..., -1, :]
    dx[..., -2, :] -= d_delta[..., -1, :]
    return dx


def _pairdist_to_points(d_sigma, diff, dist, pass_mask, rho):
    """Gradient of sigma = |diff| / rho with respect to the difference vector.

    ``d_sigma`` has one more entry than ``diff`` along the difference axis
    (the trailing copy); the copy's gradient folds onto its source. Entries
    whose raw scale was clamped to the floor pass nothing.
    """
    src = d_sigma[..., :-1].copy()
    src[..., -1] += d_sigma[..., -1]
    src = np.where(pass_mask, src, 0.0) / rho
    inv = np.where(dist > 0.0, 1.0 / np.where(dist > 0.0, dist, 1.0), 0.0)
    return (src * inv)[..., None] * diff


def backward_sampling(ggrads: GaussianGrads, curves: CurveSet,
                      ctx: SamplingCtx) -> GradientBuffer:
    """Chain per-gaussian gradients back to curve parameters.

    Centers scatter through the Bernstein weight matrix (and, for regions,
    the linear boundary interpolation), scale gradients through the pairwise
    distances, rotations through atan2, stroke sigma_y into the width, and
    opacities through the per-segment / 3-node-interpolation assignment.
    """
    out = GradientBuffer.zeros_like(curves)
    n = len(ggrads.centers)
    if n == 0:
        return out
    # undo the depth gather: back to curve-major order
    inv = ctx.gather_idx
    cent = np.zeros((n, 2))
    cent[inv] = ggrads.centers
    dsx = np.zeros(n)
    dsx[inv] = ggrads.sigma_x
    dsy = np.zeros(n)
    dsy[inv] = ggrads.sigma_y
    dth = np.zeros(n)
    dth[inv] = ggrads.theta
    dcol = np.zeros((n, 3))
    dcol[inv] = ggrads.color
    dop = np.zeros(n)
    dop[inv] = ggrads.opacity

    k = ctx.k
    ns, nr = ctx.n_strokes, ctx.n_regions
    n_stroke_g = ns * 3 * k

    if ns:
        sc = ctx.stroke
        m = 3 * k
        dx_pts = cent[:n_stroke_g].reshape(ns, m, 2).copy()
        g_sx = dsx[:n_stroke_g].reshape(ns, m)
        g_sy = dsy[:n_stroke_g].reshape(ns, m)
        g_th = dth[:n_stroke_g].reshape(ns, m)

        # sigma_x: distances between consecutive samples
        d_diff = _pairdist_to_points(g_sx, sc["diff"], sc["dist"],
                                     sc["sx_pass"][:, :-1], ctx.rho)
        dx_pts[:, 1:] += d_diff
        dx_pts[:, :-1] -= d_diff
        # sigma_y is the width itself (no rho division)
        out.stroke_widths[:] = np.where(sc["sy_pass"], g_sy.sum(axis=1), 0.0)
        # rotations
        dx_pts += _theta_to_points(g_th, sc["delta"], sc["delta_sq"])
        # through the Bernstein weights into the 10-point layout
        d_seg = np.einsum("kj,nskd->nsjd", ctx.weights,
                          dx_pts.reshape(ns, 3, k, 2))
        for si, (a0, b0) in enumerate(STROKE_SPANS):
            out.stroke_points[:, a0:b0] += d_seg[:, si]
        out.stroke_colors[:] = dcol[:n_stroke_g].reshape(ns, m, 3).sum(axis=1)
        out.stroke_opacities[:] = dop[:n_stroke_g].reshape(ns, 3, k).sum(axis=2)

    if nr:
        rc = ctx.region
        r2 = ctx.r + 2
        dx_grid = cent[n_stroke_g:].reshape(nr, r2, k, 2).copy()
        g_sx = dsx[n_stroke_g:].reshape(nr, r2, k)
        g_sy = dsy[n_stroke_g:].reshape(nr, r2, k)
        g_th = dth[n_stroke_g:].reshape(nr, r2, k)

        d_diff = _pairdist_to_points(g_sx, rc["dx"], rc["distx"],
                                     rc["sx_pass"][:, :, :-1], ctx.rho)
        dx_grid[:, :, 1:] += d_diff
        dx_grid[:, :, :-1] -= d_diff

        # sigma_y: distances between corresponding samples on adjacent rows
        src = g_sy[:, :-1].copy()
        src[:, -1] += g_sy[:, -1]
        src = np.where(rc["sy_pass"][:, :-1], src, 0.0) / ctx.rho
        inv_d = np.where(rc["disty"] > 0.0,
                         1.0 / np.where(rc["disty"] > 0.0, rc["disty"], 1.0), 0.0)
        d_dy = (src * inv_d)[..., None] * rc["dy"]
        dx_grid[:, 1:] += d_dy
        dx_grid[:, :-1] -= d_dy

        dx_grid += _theta_to_points(g_th, rc["delta"], rc["delta_sq"])

        d_rows = np.einsum("kj,nrkd->nrjd", ctx.weights, dx_grid)
        ts = rc["ts"]
        d_pa = np.einsum("r,nrjd->njd", 1.0 - ts, d_rows)
        d_pb = np.einsum("r,nrjd->njd", ts, d_rows)
        out.region_points[:, 0] = d_pa[:, 0] + d_pb[:, 0]
        out.region_points[:, 1] = d_pa[:, 1]
        out.region_points[:, 2] = d_pa[:, 2]
        out.region_points[:, 3] = d_pa[:, 3] + d_pb[:, 3]
        out.region_points[:, 4] = d_pb[:, 1]
        out.region_points[:, 5] = d_pb[:, 2]

        out.region_colors[:] = dcol[n_stroke_g:].reshape(nr, r2 * k, 3).sum(axis=1)
        row_sums = dop[n_stroke_g:].reshape(nr, r2, k).sum(axis=2)
        out.region_opacities[:] = np.einsum("nr,rj->nj", row_sums, rc["wop"])

    return out


# ---------------------------------------------------------------------------
# finite-difference oracle
# ---------------------------------------------------------------------------

@dataclass
class ClassStats:
    max_rel: float = 0.0
    mean_rel: float = 0.0
    count: int = 0
    worst: str = ""


@dataclass
class GradCheckReport:
    """Outcome of a finite-difference sweep over every scalar parameter."""

    passed: bool
    stats: dict[str, ClassStats]
    failures: list[str] = field(default_factory=list)
    flagged: list[str] = field(default_factory=list)   # clamp-boundary params, excluded
    n_checked: int = 0

    def summary(self) -> str:
        lines = [f"gradient check: {'PASS' if self.passed else 'FAIL'}"
                 f" ({self.n_checked} parameters)"]
        for name, st in sorted(self.stats.items()):
            lines.append(f"  {name:18s} max_rel={st.max_rel:9.3e}"
                         f" mean_rel={st.mean_rel:9.3e} worst={st.worst}")
        for f in self.failures[:8]:
            lines.append(f"  FAIL {f}")
        if self.flagged:
            lines.append(f"  excluded (clamp boundary): {len(self.flagged)}")
        return "\n".join(lines)


def check_gradients(curves: CurveSet, target: np.ndarray, h: float = 1e-3,
                    tolerance: float = 1e-4, abs_tol: float = 1e-7,
                    k: int = 16, r: int = 6, rho: float = 3.0,
                    sigma_floor: float = 0.3, alpha_max: float = 0.99,
                    lambda1: float = 1.0,
                    analytic_scale: float = 1.0) -> GradCheckReport:
    """Central-difference check of the analytic gradient of the L2 loss.

    A parameter passes when |analytic - fd| <= abs_tol + tolerance * mag
    (the usual combined predicate: relative tolerance with an absolute
    floor absorbing the O(h^2) truncation of the differences themselves).

    Runs the real pipeline in float64 with culling, early termination and
    the tail cutoff disabled (their threshold flips are piecewise-constant
    by policy and would otherwise alias into the differences). Parameters
    whose raw scale sits within 2 h of the sigma floor are flagged and
    excluded: the clamp makes them genuinely one-sided there.

    ``analytic_scale`` multiplies the analytic side before comparison; it
    exists so tests can corrupt a correct gradient and confirm the check
    fails (sensitivity canary).
    """
    if h <= 0:
        raise ValueError("finite-difference step h must be > 0")
    target = np.asarray(target, dtype=np.float64)
    height, width = target.shape[:2]
    kw = dict(k=k, r=r, rho=rho, sigma_floor=sigma_floor, dtype=np.float64)
    render_kw = dict(width=width, height=height, background=curves.background,
                     t_eps=0.0, alpha_max=alpha_max, radius_mult=1e6)

    def loss_of(cs: CurveSet) -> float:
        batch, _ = build_batch(cs, **kw)
        buf = render(batch, **render_kw)
        return lambda1 * float(np.mean((buf.color - target) ** 2))

    # analytic gradient
    batch, ctx = build_batch(curves, **kw)
    buf = render(batch, **render_kw)
    dl = lambda1 * 2.0 * (buf.color - target) / target.size
    gbuf = backward_sampling(backward_blend(batch, buf, dl), curves, ctx)

    flagged: list[str] = []
    # a perturbation of size h moves a raw scale by at most ~2h/rho; only
    # raw values inside this band can cross the clamp during the sweep
    band = 2.0 * h

    def near_floor(raw):
        return np.abs(raw - sigma_floor) < band

    flagged_strokes = np.zeros(curves.n_strokes, bool)
    flagged_regions = np.zeros(curves.n_regions, bool)
    if curves.n_strokes:
        sc = ctx.stroke
        raw = np.concatenate([sc["dist"], sc["dist"][:, -1:]], axis=1) / rho
        nonstructural = raw > 0
        flagged_strokes = (near_floor(raw) & nonstructural).any(axis=1)
        flagged_strokes |= near_floor(curves.stroke_widths)
    if curves.n_regions:
        rc = ctx.region
        rawx = np.concatenate([rc["distx"], rc["distx"][:, :, -1:]], axis=2) / rho
        rawy = np.concatenate([rc["disty"], rc["disty"][:, -1:]], axis=1) / rho
        fl = (near_floor(rawx) & (rawx > 0)).any(axis=(1, 2))
        fl |= (near_floor(rawy) & (rawy > 0)).any(axis=(1, 2))
        flagged_regions = fl

    stats: dict[str, ClassStats] = {}
    failures: list[str] = []
    rels: dict[str, list[float]] = {}
    n_checked = 0

    def compare(analytic, desc, cls, perturb):
        nonlocal n_checked
        analytic = analytic * analytic_scale
        fd = (loss_with(perturb, +h) - loss_with(perturb, -h)) / (2.0 * h)
        mag = max(abs(analytic), abs(fd))
        st = stats.setdefault(cls, ClassStats())
        err_abs = abs(analytic - fd)
        rel = err_abs / mag if mag > 0 else 0.0
        ok = err_abs <= abs_tol + tolerance * mag
        err = rel if mag >= tolerance else err_abs
        rels.setdefault(cls, []).append(rel if mag >= tolerance else 0.0)
        if err > st.max_rel:
            st.max_rel = err
            st.worst = desc
        st.count += 1
        n_checked += 1
        if not ok:
            failures.append(f"{desc}: analytic={analytic:.6e} fd={fd:.6e}")

    def loss_with(perturb, delta):
        perturb(delta)
        try:
            return loss_of(curves)
        finally:
            perturb(-delta)

    def sweep(arr, garr, cls, fmt, flag_mask=None, geom=False):
        it = np.ndindex(arr.shape)
        for idx in it:
            ci = idx[0]
            desc = fmt(idx)
            if flag_mask is not None and flag_mask[ci] and geom:
                flagged.append(desc)
                continue

            def perturb(delta, _arr=arr, _idx=idx):
                _arr[_idx] += delta
            compare(float(garr[idx]), desc, cls, perturb)

    sweep(curves.stroke_points, gbuf.stroke_points, "stroke_points",
          lambda i: f"stroke[{i[0]}].points[{i[1]}].{'xy'[i[2]]}",
          flagged_strokes, geom=True)
    sweep(curves.stroke_widths, gbuf.stroke_widths, "stroke_width",
          lambda i: f"stroke[{i[0]}].width", flagged_strokes, geom=True)
    sweep(curves.stroke_colors, gbuf.stroke_colors, "stroke_color",
          lambda i: f"stroke[{i[0]}].color[{i[1]}]")
    sweep(curves.stroke_opacities, gbuf.stroke_opacities, "stroke_opacity",
          lambda i: f"stroke[{i[0]}].opacity[{i[1]}]")
    sweep(curves.region_points, gbuf.region_points, "region_points",
          lambda i: f"region[{i[0]}].points[{i[1]}].{'xy'[i[2]]}",
          flagged_regions, geom=True)
    sweep(curves.region_colors, gbuf.region_colors, "region_color",
          lambda i: f"region[{i[0]}].color[{i[1]}]")
    sweep(curves.region_opacities, gbuf.region_opacities, "region_opacity",
          lambda i: f"region[{i[0]}].opacity[{i[1]}]")

    for cls, vals in rels.items():
        stats[cls].mean_rel = float(np.mean(vals))
    return GradCheckReport(passed=not failures, stats=stats, failures=failures,
                           flagged=flagged, n_checked=n_checked)
