"""The optimization loop: render, loss, backward, Adam step, adapt.

Adam runs with per-parameter-class learning rates (color 0.01, control
points 2e-4 per normalized canvas unit, opacity 0.1, width 2e-3) under a
step-decay schedule (all rates halve every 5000 iterations). After every
step, parameters are projected back to their valid ranges. Every
``adapt_every`` iterations (until ``adapt_until``) the adaptive step prunes
and respawns curves; replacement curves restart with zeroed Adam moments and
a fresh bias-correction age.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .adaptive import PruneCriteria, adapt, circle_region, circle_stroke
from .autograd import GradientBuffer, backward_blend, backward_sampling
from .config import TrainerConfig
from .curve_model import CurveSet
from .losses import evaluate_loss
from .rasterizer import render
from .splat_sampler import build_batch

BETA1 = 0.9
BETA2 = 0.999
EPS = 1e-8

PARAM_CLASSES = (
    "stroke_points", "stroke_widths", "stroke_colors", "stroke_opacities",
    "region_points", "region_colors", "region_opacities",
)


@dataclass
class OptimState:
    """Adam first/second moments per parameter class, plus per-curve ages.

    Ages drive bias correction and reset to zero for curves spawned by the
    adaptive step, so fresh curves see a fresh optimizer.
    """

    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    stroke_age: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))
    region_age: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))

    @classmethod
    def zeros(cls, curves: CurveSet) -> "OptimState":
        st = cls()
        for name in PARAM_CLASSES:
            st.m[name] = np.zeros_like(getattr(curves, name))
            st.v[name] = np.zeros_like(getattr(curves, name))
        st.stroke_age = np.zeros(curves.n_strokes, np.int64)
        st.region_age = np.zeros(curves.n_regions, np.int64)
        return st

    def survive(self, stroke_keep, region_keep, n_new_strokes, n_new_regions):
        """Drop moments of pruned curves, append zeroed ones for spawns."""
        def cut(name, keep, n_new):
            for d in (self.m, self.v):
                kept = d[name][keep]
                pad = np.zeros((n_new,) + kept.shape[1:], kept.dtype)
                d[name] = np.concatenate([kept, pad])
        for name in ("stroke_points", "stroke_widths", "stroke_colors", "stroke_opacities"):
            cut(name, stroke_keep, n_new_strokes)
        for name in ("region_points", "region_colors", "region_opacities"):
            cut(name, region_keep, n_new_regions)
        self.stroke_age = np.concatenate(
            [self.stroke_age[stroke_keep], np.zeros(n_new_strokes, np.int64)])
        self.region_age = np.concatenate(
            [self.region_age[region_keep], np.zeros(n_new_regions, np.int64)])


@dataclass
class TraceRow:
    iteration: int
    l2: float
    psnr: float
    curve_count: int
    pruned: int
    added: int


TRACE_HEADER = "iter,l2,psnr,curve_count,pruned,added"


def trace_to_csv(rows: list[TraceRow]) -> str:
    lines = [TRACE_HEADER]
    for r in rows:
        lines.append(f"{r.iteration},{r.l2:.8g},{r.psnr:.6g},"
                     f"{r.curve_count},{r.pruned},{r.added}")
    return "\n".join(lines) + "\n"


def _lr_table(cfg: TrainerConfig, canvas_w: int, canvas_h: int) -> dict:
    pts = cfg.lr_points * np.array([canvas_w, canvas_h], dtype=float)
    return {
        "stroke_points": pts, "region_points": pts,
        "stroke_widths": cfg.lr_width,
        "stroke_colors": cfg.lr_color, "region_colors": cfg.lr_color,
        "stroke_opacities": cfg.lr_opacity, "region_opacities": cfg.lr_opacity,
    }


def schedule_multiplier(cfg: TrainerConfig, iteration: int) -> float:
    return cfg.lr_decay_factor ** (iteration // cfg.lr_decay_every)


def step(curves: CurveSet, grads: GradientBuffer, state: OptimState,
         cfg: TrainerConfig, iteration: int):
    """One Adam update (beta1 0.9, beta2 0.999, eps 1e-8) plus projections.

    Clamps after the update: color and opacity to [0,1], width to
    [width_min, inf), control points to [-0.25, 1.25] x canvas per axis.
    Raises on non-finite gradients, naming the offending parameter.
    """
    if not grads.finite():
        raise FloatingPointError(
            f"non-finite gradient at {grads.first_nonfinite()} (iteration {iteration})")
    lrs = _lr_table(cfg, curves.canvas_w, curves.canvas_h)
    mult = schedule_multiplier(cfg, iteration)
    state.stroke_age += 1
    state.region_age += 1
    ages = {
        "stroke_points": state.stroke_age[:, None, None],
        "stroke_widths": state.stroke_age,
        "stroke_colors": state.stroke_age[:, None],
        "stroke_opacities": state.stroke_age[:, None],
        "region_points": state.region_age[:, None, None],
        "region_colors": state.region_age[:, None],
        "region_opacities": state.region_age[:, None],
    }
    for name in PARAM_CLASSES:
        g = getattr(grads, name)
        if g.size == 0:
            continue
        m, v = state.m[name], state.v[name]
        m *= BETA1
        m += (1.0 - BETA1) * g
        v *= BETA2
        v += (1.0 - BETA2) * g * g
        t = ages[name]
        m_hat = m / (1.0 - BETA1 ** t)
        v_hat = v / (1.0 - BETA2 ** t)
        param = getattr(curves, name)
        param -= (lrs[name] * mult) * m_hat / (np.sqrt(v_hat) + EPS)

    w, h = curves.canvas_w, curves.canvas_h
    np.clip(curves.stroke_points[..., 0], -0.25 * w, 1.25 * w,
            out=curves.stroke_points[..., 0])
    np.clip(curves.stroke_points[..., 1], -0.25 * h, 1.25 * h,
            out=curves.stroke_points[..., 1])
    np.clip(curves.region_points[..., 0], -0.25 * w, 1.25 * w,
            out=curves.region_points[..., 0])
    np.clip(curves.region_points[..., 1], -0.25 * h, 1.25 * h,
            out=curves.region_points[..., 1])
    np.clip(curves.stroke_widths, cfg.width_min, None, out=curves.stroke_widths)
    for arr in (curves.stroke_colors, curves.region_colors,
                curves.stroke_opacities, curves.region_opacities):
        np.clip(arr, 0.0, 1.0, out=arr)


def init_curves(cfg: TrainerConfig, target: np.ndarray,
                rng: np.random.Generator | None = None) -> CurveSet:
    """Random circular-pattern initialization over the canvas.

    Centers are uniform; the radius gives each curve an equal share of the
    canvas area; colors come from the target pixel under the center (or are
    uniform random with ``init_color='random'``).
    """
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    h, w = target.shape[:2]
    radius = float(np.clip(np.sqrt((w * h / max(cfg.n_curves, 1)) / np.pi),
                           2.0, 0.25 * min(w, h)))
    strokes, regions = [], []
    for _ in range(cfg.n_curves):
        cx = float(rng.uniform(0, w))
        cy = float(rng.uniform(0, h))
        if cfg.init_color == "target":
            color = target[min(int(cy), h - 1), min(int(cx), w - 1)].astype(float)
        else:
            color = rng.uniform(0.0, 1.0, 3)
        ops = np.full(3, cfg.opacity_init)
        if cfg.mode == "open":
            strokes.append(circle_stroke((cx, cy), radius, cfg.width_init,
                                         color, ops,
                                         phase=float(rng.uniform(0, 2 * np.pi))))
        else:
            regions.append(circle_region((cx, cy), radius, color, ops))
    return CurveSet.from_curves(strokes=strokes, regions=regions,
                                canvas_w=w, canvas_h=h,
                                background=cfg.background)


@dataclass
class TrainResult:
    curves: CurveSet
    trace: list[TraceRow]
    final_l2: float
    final_psnr: float


def _np_dtype(cfg: TrainerConfig):
    return np.float64 if cfg.dtype == "float64" else np.float32


def set_threads(cfg: TrainerConfig):
    import numba
    n = numba.config.NUMBA_NUM_THREADS
    numba.set_num_threads(max(1, min(cfg.threads, n)) if cfg.threads > 0 else n)


def forward(curves: CurveSet, cfg: TrainerConfig):
    """Splat + render with the config's rasterizer knobs."""
    batch, ctx = build_batch(
        curves, k=cfg.samples_per_segment, r=cfg.interp_curves, rho=cfg.rho,
        sigma_floor=cfg.sigma_floor, dtype=_np_dtype(cfg))
    buf = render(batch, curves.canvas_w, curves.canvas_h, curves.background,
                 tile_size=cfg.tile_size, t_eps=cfg.t_eps,
                 alpha_max=cfg.alpha_max, radius_mult=cfg.radius_mult)
    return batch, ctx, buf


def _effective_opacity_threshold(cfg: TrainerConfig, iteration: int) -> float:
    if cfg.opacity_threshold_start is None:
        return cfg.opacity_threshold
    until = max(cfg.resolved_adapt_until(), 1)
    frac = min(iteration / until, 1.0)
    return cfg.opacity_threshold_start + frac * (cfg.opacity_threshold
                                                 - cfg.opacity_threshold_start)


def train(target: np.ndarray, cfg: TrainerConfig,
          snapshot_cb=None, init: CurveSet | None = None) -> TrainResult:
    """Full optimization run; deterministic for a fixed seed and config.

    ``snapshot_cb(iteration, curves, buffer)`` fires at every trace point if
    given. ``init`` overrides the random initialization (used by
    self-reconstruction experiments).
    """
    set_threads(cfg)
    target = np.ascontiguousarray(np.asarray(target, dtype=np.float64))
    rng = np.random.default_rng(cfg.seed)
    curves = init if init is not None else init_curves(cfg, target, rng)
    state = OptimState.zeros(curves)
    iters = cfg.resolved_iters()
    adapt_until = cfg.resolved_adapt_until()

    trace: list[TraceRow] = []
    pruned_accum = added_accum = 0
    last_l2 = math.nan

    def emit(iteration, l2):
        nonlocal pruned_accum, added_accum
        p = 10.0 * math.log10(1.0 / l2) if l2 > 0 else math.inf
        trace.append(TraceRow(iteration, l2, p, curves.n_curves,
                              pruned_accum, added_accum))
        pruned_accum = added_accum = 0

    for it in range(iters):
        batch, ctx, buf = forward(curves, cfg)
        report, dpix, xgrad = evaluate_loss(
            curves, buf.color, target, cfg.lambda1, cfg.lambda2, cfg.xing_hard_sign)
        last_l2 = report.l2
        if it == 0:
            emit(0, report.l2)
            if snapshot_cb:
                snapshot_cb(0, curves, buf)

        ggrads = backward_blend(batch, buf, dpix)
        gbuf = backward_sampling(ggrads, curves, ctx)
        gbuf.region_points += xgrad
        if cfg.opacity_count == 1:
            gbuf.stroke_opacities[:] = gbuf.stroke_opacities.sum(axis=1, keepdims=True)
            gbuf.region_opacities[:] = gbuf.region_opacities.sum(axis=1, keepdims=True)
        step(curves, gbuf, state, cfg, it)

        done = it + 1
        if (cfg.adapt_enabled and done % cfg.adapt_every == 0 and done <= adapt_until):
            criteria = PruneCriteria(
                opacity_threshold=_effective_opacity_threshold(cfg, done),
                area_threshold=cfg.area_threshold,
                mid_dip_ratio=cfg.mid_dip_ratio,
                color_sim_threshold=cfg.color_sim_threshold,
                aabb_overlap_threshold=cfg.aabb_overlap_threshold)
            curves, arep = adapt(curves, report.error_map, criteria, cfg.mode,
                                 target, rng, ctx.areas, ctx.aabbs,
                                 width=cfg.width_init, opacity=cfg.opacity_init)
            if arep.removed:
                n_new_s = arep.added if cfg.mode == "open" else 0
                n_new_r = arep.added if cfg.mode == "closed" else 0
                state.survive(arep.stroke_keep, arep.region_keep, n_new_s, n_new_r)
            pruned_accum += arep.removed
            added_accum += arep.added

        if done % cfg.trace_every == 0 or done == iters:
            _, _, buf2 = forward(curves, cfg)
            l2 = float(np.mean((buf2.color.astype(np.float64) - target) ** 2))
            last_l2 = l2
            emit(done, l2)
            if snapshot_cb:
                snapshot_cb(done, curves, buf2)

    if iters == 0:
        _, _, buf0 = forward(curves, cfg)
        l2 = float(np.mean((buf0.color.astype(np.float64) - target) ** 2))
        emit(0, l2)
        if snapshot_cb:
            snapshot_cb(0, curves, buf0)
        last_l2 = l2

    psnr = 10.0 * math.log10(1.0 / last_l2) if last_l2 > 0 else math.inf
    return TrainResult(curves=curves, trace=trace, final_l2=last_l2, final_psnr=psnr)
