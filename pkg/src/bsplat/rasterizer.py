"""Forward rendering: tile-binned, depth-ordered alpha blending of gaussians.

The tiled path (``render``) is the production renderer; ``render_bruteforce``
is the correctness oracle with identical blending semantics but no tiling, no
influence-radius culling and no early termination, so every gaussian visits
every pixel. Both accumulate in float64 and agree to well below 1e-5 per
channel; the residual difference is bounded by the t_eps stop plus the
gaussian tail mass beyond radius_mult sigma.

Pixels are sampled at their centers (x + 0.5, y + 0.5). Colors stay inside
[0,1] by convexity of the blend, no output clamping involved.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .splat_sampler import Gaussian2D, SplatBatch

DEFAULT_TILE = 16
DEFAULT_T_EPS = 1e-6
DEFAULT_ALPHA_MAX = 0.99
DEFAULT_RADIUS_MULT = 6.0


@dataclass
class RenderBuffer:
    """Forward output: H x W x 3 color, per-pixel transmittance, diagnostics.

    ``contrib_count`` is how many gaussians blended into each pixel;
    ``term_pos`` is the tile-list position where early termination kicked in
    (internal, replayed by the backward pass).
    """

    color: np.ndarray
    transmittance: np.ndarray
    contrib_count: np.ndarray
    term_pos: np.ndarray
    background: np.ndarray

    def __post_init__(self):
        self._replay = None   # set by render(); consumed by backward_blend


@dataclass
class TileIndex:
    """Per-tile, depth-sorted gaussian lists plus the prepped conics.

    A gaussian lands in every tile its axis-aligned influence box (the
    radius_mult-sigma ellipse's AABB) overlaps.
    """

    tile_size: int
    ntx: int
    nty: int
    tile_offsets: np.ndarray     # (ntiles + 1,)
    sorted_gauss: np.ndarray     # (n_pairs,)
    prep: dict                   # float64 per-gaussian arrays for the kernels


def inv_covariance(sigma_x, sigma_y, theta) -> np.ndarray:
    """Closed-form inverse covariance of a rotated-diagonal gaussian.

    Sigma = R S (R S)^T with R the rotation by theta and S = diag(sx, sy);
    the inverse is assembled directly from 1/sx^2, 1/sy^2 and theta rather
    than inverting a 2x2 numerically. Scalars give (2, 2); arrays broadcast
    to (..., 2, 2).
    """
    a = 1.0 / np.square(np.asarray(sigma_x, dtype=float))
    b = 1.0 / np.square(np.asarray(sigma_y, dtype=float))
    c, s = np.cos(theta), np.sin(theta)
    m00 = a * c * c + b * s * s
    m01 = (a - b) * c * s
    m11 = a * s * s + b * c * c
    out = np.stack([np.stack([m00, m01], axis=-1),
                    np.stack([m01, m11], axis=-1)], axis=-2)
    return out


def gaussian_alpha(g: Gaussian2D, pixel, alpha_max: float = DEFAULT_ALPHA_MAX) -> float:
    """Blend weight of one gaussian at one point: opacity * exp(-d' Sinv d / 2)."""
    d = np.asarray(pixel, dtype=float) - g.center
    sinv = inv_covariance(g.sigma_x, g.sigma_y, g.theta)
    q = 0.5 * d @ sinv @ d
    return min(g.opacity * np.exp(-q), alpha_max)


def _prep_gaussians(batch: SplatBatch, width, height, tile_size, radius_mult):
    """Float64 conics, influence boxes and tile ranges for the kernels."""
    sx = batch.sigma_x.astype(np.float64)
    sy = batch.sigma_y.astype(np.float64)
    th = batch.theta.astype(np.float64)
    a_inv = 1.0 / (sx * sx)
    b_inv = 1.0 / (sy * sy)
    c, s = np.cos(th), np.sin(th)
    ca = a_inv * c * c + b_inv * s * s
    cb = (a_inv - b_inv) * c * s
    cc = a_inv * s * s + b_inv * c * c
    # AABB of the radius_mult-sigma ellipse: sqrt of covariance diagonal
    hx = radius_mult * np.sqrt(sx * sx * c * c + sy * sy * s * s)
    hy = radius_mult * np.sqrt(sx * sx * s * s + sy * sy * c * c)
    cx = batch.centers[:, 0].astype(np.float64)
    cy = batch.centers[:, 1].astype(np.float64)
    return {
        "cx": cx, "cy": cy, "ca": ca, "cb": cb, "cc": cc,
        "opac": batch.opacity.astype(np.float64),
        "color": batch.color.astype(np.float64),
        "gx0": cx - hx, "gx1": cx + hx, "gy0": cy - hy, "gy1": cy + hy,
    }


def build_tile_index(batch: SplatBatch, width: int, height: int,
                     tile_size: int = DEFAULT_TILE,
                     radius_mult: float = DEFAULT_RADIUS_MULT) -> TileIndex:
    """Bin gaussians to tiles, keeping depth order within each tile."""
    ntx = (width + tile_size - 1) // tile_size
    nty = (height + tile_size - 1) // tile_size
    prep = _prep_gaussians(batch, width, height, tile_size, radius_mult)
    if len(batch) == 0:
        return TileIndex(tile_size, ntx, nty,
                         np.zeros(ntx * nty + 1, np.int64),
                         np.zeros(0, np.int64), prep)
    tx0 = np.clip(np.floor(prep["gx0"] / tile_size), 0, ntx - 1).astype(np.int64)
    tx1 = np.clip(np.floor(prep["gx1"] / tile_size), 0, ntx - 1).astype(np.int64)
    ty0 = np.clip(np.floor(prep["gy0"] / tile_size), 0, nty - 1).astype(np.int64)
    ty1 = np.clip(np.floor(prep["gy1"] / tile_size), 0, nty - 1).astype(np.int64)
    # fully off-canvas boxes become empty ranges
    off = (prep["gx1"] < 0) | (prep["gx0"] > width) | (prep["gy1"] < 0) | (prep["gy0"] > height)
    tx1 = np.where(off, tx0 - 1, tx1)
    pair_gauss, pair_tile = _kernels.expand_pairs(tx0, tx1, ty0, ty1, ntx)
    tile_offsets, sorted_gauss = _kernels.sort_pairs_by_tile(
        pair_tile, pair_gauss, ntx * nty)
    return TileIndex(tile_size, ntx, nty, tile_offsets, sorted_gauss, prep)


def render(batch: SplatBatch, width: int, height: int, background=(1.0, 1.0, 1.0),
           tile_size: int = DEFAULT_TILE, t_eps: float = DEFAULT_T_EPS,
           alpha_max: float = DEFAULT_ALPHA_MAX,
           radius_mult: float = DEFAULT_RADIUS_MULT,
           tiles: TileIndex | None = None) -> RenderBuffer:
    """Tiled front-to-back render of a depth-sorted batch.

    Deterministic for a fixed batch: every pixel belongs to exactly one tile
    and is blended in list order, so thread scheduling cannot change results.
    """
    dtype = batch.centers.dtype if len(batch) else np.float64
    bg = np.asarray(background, dtype=np.float64)
    if tiles is None:
        tiles = build_tile_index(batch, width, height, tile_size, radius_mult)
    p = tiles.prep
    out_color = np.empty((height, width, 3), np.float64)
    out_trans = np.empty((height, width), np.float64)
    out_count = np.zeros((height, width), np.int32)
    out_term = np.full((height, width), _kernels.TERM_NONE, np.int32)
    q_max = 0.5 * radius_mult * radius_mult
    _kernels.forward_kernel(
        tiles.tile_offsets, tiles.sorted_gauss, tiles.tile_size, width, height,
        p["cx"], p["cy"], p["ca"], p["cb"], p["cc"], p["opac"], p["color"],
        p["gy0"], p["gy1"], bg, t_eps, alpha_max, q_max,
        out_color, out_trans, out_count, out_term)
    buf = RenderBuffer(color=out_color.astype(dtype),
                       transmittance=out_trans.astype(dtype),
                       contrib_count=out_count, term_pos=out_term,
                       background=bg)
    buf._replay = {
        "tiles": tiles, "t_eps": t_eps, "alpha_max": alpha_max, "q_max": q_max,
        "width": width, "height": height, "n_gaussians": len(batch),
        "trans64": out_trans,
    }
    return buf


def render_bruteforce(batch: SplatBatch, width: int, height: int,
                      background=(1.0, 1.0, 1.0),
                      alpha_max: float = DEFAULT_ALPHA_MAX) -> RenderBuffer:
    """Reference renderer: same blend, no tiling, no culling, no early stop."""
    dtype = batch.centers.dtype if len(batch) else np.float64
    bg = np.asarray(background, dtype=np.float64)
    xs = np.arange(width, dtype=np.float64) + 0.5
    ys = np.arange(height, dtype=np.float64) + 0.5
    trans = np.ones((height, width), np.float64)
    color = np.zeros((height, width, 3), np.float64)
    p = _prep_gaussians(batch, width, height, 0, 1.0)
    for g in range(len(batch)):
        dx = xs[None, :] - p["cx"][g]
        dy = ys[:, None] - p["cy"][g]
        q = 0.5 * p["ca"][g] * dx * dx + p["cb"][g] * dx * dy + 0.5 * p["cc"][g] * dy * dy
        alpha = np.minimum(p["opac"][g] * np.exp(-q), alpha_max)
        color += (alpha * trans)[:, :, None] * p["color"][g]
        trans *= 1.0 - alpha
    color += trans[:, :, None] * bg
    return RenderBuffer(color=color.astype(dtype),
                        transmittance=trans.astype(dtype),
                        contrib_count=np.full((height, width), len(batch), np.int32),
                        term_pos=np.full((height, width), _kernels.TERM_NONE, np.int32),
                        background=bg)
