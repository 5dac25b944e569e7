"""Training objective: L2 image loss plus a convexity penalty on regions.

The convexity ("xing") term works on each closed-region boundary segment's
control polygon A, B, C, D: with D1 the (smoothly signed) orientation of the
first corner cross(B-A, C-B) and D2 the normalized second corner
cross(C-B, D-C) / (|C-B| |D-C|), the penalty D1 relu(-D2) + (1-D1) relu(D2)
is zero exactly when both corners turn the same way, so interpolated
interior curves cannot fold over. Open strokes have no interpolation step
and are excluded.

The L2 loss also produces the per-pixel error map that drives densification.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .curve_model import CurveSet

XING_SIGN_SLOPE = 50.0


@dataclass
class LossReport:
    l2: float
    xing: float
    total: float
    error_map: np.ndarray   # (H, W) channel-summed squared error


def l2_loss(rendered: np.ndarray, target: np.ndarray):
    """Mean squared error, its pixel gradient, and the per-pixel error map.

    Returns (value, d value / d pixels, error_map); the error map is the
    channel sum of squared differences (so error_map.sum() / (H*W*3) equals
    the value).
    """
    rendered = np.asarray(rendered, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if rendered.shape != target.shape:
        raise ValueError(f"image shapes differ: {rendered.shape} vs {target.shape}")
    diff = rendered - target
    value = float(np.mean(diff * diff))
    grad = 2.0 * diff / diff.size
    error_map = np.sum(diff * diff, axis=-1)
    return value, grad, error_map


def _cross(u, v):
    return u[..., 0] * v[..., 1] - u[..., 1] * v[..., 0]


def xing_loss(curves: CurveSet, hard_sign: bool = False,
              slope: float = XING_SIGN_SLOPE):
    """Convexity penalty over all closed-region segments.

    Returns (value, d value / d region control points) with the gradient in
    the (N, 6, 2) unique-point layout. Rigid motions of the control polygon
    leave the value unchanged (everything is built from difference cross
    products). The hard-sign variant reproduces the discrete indicator; the
    default smooth sign (a steep sigmoid) removes its zero-gradient plateau.
    """
    n = curves.n_regions
    grad = np.zeros((n, 6, 2))
    if n == 0:
        return 0.0, grad
    pts = curves.region_points
    # segment control polygons: (N, 2 segments, 4 points, 2)
    segs = np.stack([pts[:, [0, 1, 2, 3]], pts[:, [0, 4, 5, 3]]], axis=1)
    a, b, c, d = segs[:, :, 0], segs[:, :, 1], segs[:, :, 2], segs[:, :, 3]
    v1, v2, v3 = b - a, c - b, d - c
    cross1 = _cross(v1, v2)
    cross2 = _cross(v2, v3)
    n2 = np.linalg.norm(v2, axis=-1)
    n3 = np.linalg.norm(v3, axis=-1)
    ok = (n2 > 1e-12) & (n3 > 1e-12)
    denom = np.where(ok, n2 * n3, 1.0)
    d2 = np.where(ok, cross2 / denom, 0.0)

    if hard_sign:
        d1 = (cross1 >= 0.0).astype(float)
        d_d1 = np.zeros_like(cross1)
    else:
        sig = expit(slope * cross1)
        d1 = sig
        d_d1 = slope * sig * (1.0 - sig)

    value = float(np.sum(d1 * np.maximum(-d2, 0.0) + (1.0 - d1) * np.maximum(d2, 0.0)))

    # adjoint
    g_d1 = np.maximum(-d2, 0.0) - np.maximum(d2, 0.0)
    g_d2 = -d1 * (d2 < 0.0) + (1.0 - d1) * (d2 > 0.0)
    g_c1 = g_d1 * d_d1
    g_c2 = np.where(ok, g_d2 / denom, 0.0)
    g_n2 = np.where(ok, g_d2 * (-d2) / np.where(ok, n2, 1.0), 0.0)
    g_n3 = np.where(ok, g_d2 * (-d2) / np.where(ok, n3, 1.0), 0.0)

    def perp(v):   # d cross(u, v) / du = (v_y, -v_x)
        return np.stack([v[..., 1], -v[..., 0]], axis=-1)

    inv_n2 = np.where(ok, 1.0 / np.where(ok, n2, 1.0), 0.0)
    inv_n3 = np.where(ok, 1.0 / np.where(ok, n3, 1.0), 0.0)
    g_v1 = g_c1[..., None] * perp(v2)
    g_v2 = (-g_c1[..., None]) * perp(v1) + g_c2[..., None] * perp(v3) \
        + (g_n2 * inv_n2)[..., None] * v2
    g_v3 = (-g_c2[..., None]) * perp(v2) + (g_n3 * inv_n3)[..., None] * v3

    g_a = -g_v1
    g_b = g_v1 - g_v2
    g_c = g_v2 - g_v3
    g_dp = g_v3
    # scatter: segment 0 -> points (0,1,2,3); segment 1 -> points (0,4,5,3)
    grad[:, 0] = g_a[:, 0] + g_a[:, 1]
    grad[:, 1] = g_b[:, 0]
    grad[:, 2] = g_c[:, 0]
    grad[:, 3] = g_dp[:, 0] + g_dp[:, 1]
    grad[:, 4] = g_b[:, 1]
    grad[:, 5] = g_c[:, 1]
    return value, grad


def evaluate_loss(curves: CurveSet, rendered: np.ndarray, target: np.ndarray,
                  lambda1: float = 1.0, lambda2: float = 0.01,
                  hard_sign: bool = False):
    """Full objective lambda1 * L2 + lambda2 * xing.

    Returns (LossReport, d total / d pixels, d total / d region points).
    """
    l2, dpix, emap = l2_loss(rendered, target)
    xing, xgrad = xing_loss(curves, hard_sign=hard_sign)
    report = LossReport(l2=l2, xing=xing, total=lambda1 * l2 + lambda2 * xing,
                        error_map=emap)
    return report, lambda1 * dpix, lambda2 * xgrad
