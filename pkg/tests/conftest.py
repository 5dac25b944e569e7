import numpy as np
import pytest

from bsplat.curve_model import ClosedRegion, CurveSet, OpenStroke
from bsplat.splat_sampler import Gaussian2D, SplatBatch


def random_gaussians(rng, n, width, height, opacity=(0.05, 0.95),
                     sigma=(0.6, 8.0)):
    """Unstructured random splats for rasterizer-level tests."""
    gs = []
    for i in range(n):
        gs.append(Gaussian2D(
            center=rng.uniform([-4, -4], [width + 4, height + 4]),
            sigma_x=float(rng.uniform(*sigma)),
            sigma_y=float(rng.uniform(*sigma)),
            theta=float(rng.uniform(0, 2 * np.pi)),
            color=rng.uniform(0, 1, 3),
            opacity=float(rng.uniform(*opacity)),
            depth=float(rng.uniform(0, 100)),
            parent=(i, 0, 0),
        ))
    return SplatBatch.from_gaussians(gs)


def random_stroke(rng, width, height, step=6.0):
    start = rng.uniform([8, 8], [width - 8, height - 8])
    pts = np.cumsum(np.concatenate([[start], rng.uniform(-step, step, (9, 2))]),
                    axis=0)
    return OpenStroke(points=pts, width=float(rng.uniform(1.0, 3.0)),
                      color=rng.uniform(0.1, 0.9, 3),
                      opacities=rng.uniform(0.2, 0.9, 3))


def random_region(rng, width, height, radius=(6.0, 11.0)):
    c = rng.uniform([12, 12], [width - 12, height - 12])
    ang = rng.uniform(0, 2 * np.pi)
    r = rng.uniform(*radius)
    p0 = c + r * np.array([np.cos(ang), np.sin(ang)])
    p3 = c + r * np.array([np.cos(ang + np.pi), np.sin(ang + np.pi)])
    pts = np.array([p0, c + rng.uniform(-r, r, 2), c + rng.uniform(-r, r, 2),
                    p3, c + rng.uniform(-r, r, 2), c + rng.uniform(-r, r, 2)])
    return ClosedRegion(points=pts, color=rng.uniform(0.1, 0.9, 3),
                        opacities=rng.uniform(0.2, 0.9, 3))


def random_curve_scene(rng, n_strokes, n_regions, width, height):
    return CurveSet.from_curves(
        strokes=[random_stroke(rng, width, height) for _ in range(n_strokes)],
        regions=[random_region(rng, width, height) for _ in range(n_regions)],
        canvas_w=width, canvas_h=height)


def smooth_stroke(rng, width, height, jitter=1.5):
    """Well-conditioned stroke: a perturbed circular arc, no micro-wiggles.

    Sample spacings stay well above the sigma floor, keeping the loss
    curvature moderate (finite differences at h=1e-3 then carry only ~1e-8
    truncation).
    """
    from bsplat.adaptive import circle_stroke
    c = rng.uniform([14, 14], [width - 14, height - 14])
    s = circle_stroke(c, float(rng.uniform(7, 12)), float(rng.uniform(1.2, 3.0)),
                      rng.uniform(0.1, 0.9, 3), rng.uniform(0.2, 0.9, 3),
                      phase=float(rng.uniform(0, 2 * np.pi)))
    s.points += rng.normal(0, jitter, s.points.shape)
    return s


def smooth_region(rng, width, height, jitter=1.0):
    """Well-conditioned closed region: a perturbed circle blob."""
    from bsplat.adaptive import circle_region
    c = rng.uniform([14, 14], [width - 14, height - 14])
    r = circle_region(c, float(rng.uniform(7, 12)),
                      rng.uniform(0.1, 0.9, 3), rng.uniform(0.2, 0.9, 3))
    r.points += rng.normal(0, jitter, r.points.shape)
    return r


def smooth_curve_scene(rng, n_strokes, n_regions, width, height):
    return CurveSet.from_curves(
        strokes=[smooth_stroke(rng, width, height) for _ in range(n_strokes)],
        regions=[smooth_region(rng, width, height) for _ in range(n_regions)],
        canvas_w=width, canvas_h=height)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
