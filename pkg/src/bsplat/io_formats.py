"""Image ingestion/emission, checkpoint persistence, and SVG export.

Checkpoints are versioned JSON (schema ``bsplat-checkpoint-v1``) with floats
written at full round-trip precision, so save -> load reproduces every
parameter bitwise. The SVG export maps each curve to one path, emitted
back-to-front (descending area) so painter's order matches the splat depth
order; per-curve multi-opacity collapses to its mean because SVG paths carry
a single opacity.
"""

from __future__ import annotations

import json
import math
import os

import numpy as np
from PIL import Image

from .config import TrainerConfig
from .curve_model import CurveSet
from .splat_sampler import assign_depths

CHECKPOINT_FORMAT = "bsplat-checkpoint-v1"


class CheckpointError(Exception):
    """Unreadable, invalid or unsupported checkpoint file."""


# ---------------------------------------------------------------------------
# raster images
# ---------------------------------------------------------------------------

def load_image(path, background=(1.0, 1.0, 1.0)) -> np.ndarray:
    """Decode a PNG into (H, W, 3) float64 in [0, 1].

    8-bit channels map by /255, 16-bit by /65535; an alpha channel is
    composited over ``background``.
    """
    try:
        img = Image.open(path)
        img.load()
    except FileNotFoundError:
        raise FileNotFoundError(f"input not found: {path}") from None
    except OSError as e:
        raise OSError(f"cannot decode image {path}: {e}") from None

    if img.mode in ("I;16", "I;16B", "I;16L", "I"):
        arr = np.asarray(img, dtype=np.float64) / 65535.0
        return np.repeat(arr[:, :, None], 3, axis=2)
    if img.mode == "P":
        img = img.convert("RGBA")
    if img.mode in ("LA",):
        img = img.convert("RGBA")
    if img.mode == "RGBA":
        arr = np.asarray(img, dtype=np.float64) / 255.0
        alpha = arr[:, :, 3:4]
        bg = np.asarray(background, dtype=np.float64)
        return arr[:, :, :3] * alpha + bg * (1.0 - alpha)
    if img.mode == "L":
        arr = np.asarray(img, dtype=np.float64) / 255.0
        return np.repeat(arr[:, :, None], 3, axis=2)
    img = img.convert("RGB")
    return np.asarray(img, dtype=np.float64) / 255.0


def save_image(image, path):
    """Write an (H, W, 3) [0,1] image (or a RenderBuffer) as 8-bit RGB PNG.

    Quantization is round-half-up of c * 255, clamped to [0, 255].
    """
    arr = getattr(image, "color", image)
    arr = np.asarray(arr, dtype=np.float64)
    data = np.clip(np.floor(arr * 255.0 + 0.5), 0, 255).astype(np.uint8)
    Image.fromarray(data, mode="RGB").save(path, format="PNG")


# ---------------------------------------------------------------------------
# SVG export
# ---------------------------------------------------------------------------

def _num(v: float) -> str:
    if not math.isfinite(v):
        raise ValueError(f"non-finite value in SVG export: {v}")
    s = f"{v:.4f}".rstrip("0").rstrip(".")
    return "0" if s in ("-0", "") else s


def _hex_color(c) -> str:
    r, g, b = (int(np.clip(np.floor(x * 255.0 + 0.5), 0, 255)) for x in c)
    return f"#{r:02x}{g:02x}{b:02x}"


def _stroke_path(points) -> str:
    p = points
    cmds = [f"M {_num(p[0, 0])} {_num(p[0, 1])}"]
    for base in (1, 4, 7):
        c = p[base:base + 3]
        cmds.append("C " + " ".join(f"{_num(q[0])} {_num(q[1])}" for q in c))
    return " ".join(cmds)


def _region_path(points) -> str:
    p = points
    a = f"C {_num(p[1, 0])} {_num(p[1, 1])} {_num(p[2, 0])} {_num(p[2, 1])} " \
        f"{_num(p[3, 0])} {_num(p[3, 1])}"
    b = f"C {_num(p[5, 0])} {_num(p[5, 1])} {_num(p[4, 0])} {_num(p[4, 1])} " \
        f"{_num(p[0, 0])} {_num(p[0, 1])}"
    return f"M {_num(p[0, 0])} {_num(p[0, 1])} {a} {b} Z"


def export_svg(curves: CurveSet, path):
    """One <path> per curve, back-to-front (descending area) document order."""
    depths = assign_depths(curves)
    order = np.lexsort((np.arange(curves.n_curves), depths))[::-1]
    ns = curves.n_strokes
    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" '
        f'viewBox="0 0 {curves.canvas_w} {curves.canvas_h}" '
        f'width="{curves.canvas_w}" height="{curves.canvas_h}">',
    ]
    for ci in order:
        if ci < ns:
            s = curves.stroke(int(ci))
            lines.append(
                f'  <path d="{_stroke_path(s.points)}" fill="none" '
                f'stroke="{_hex_color(s.color)}" stroke-width="{_num(s.width)}" '
                f'stroke-opacity="{_num(float(np.mean(s.opacities)))}" '
                f'stroke-linecap="round"/>')
        else:
            r = curves.region(int(ci) - ns)
            lines.append(
                f'  <path d="{_region_path(r.points)}" '
                f'fill="{_hex_color(r.color)}" '
                f'fill-opacity="{_num(float(np.mean(r.opacities)))}"/>')
    lines.append("</svg>")
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

def save_checkpoint(path, curves: CurveSet, config: TrainerConfig,
                    iteration: int = 0, metrics: dict | None = None):
    """Versioned JSON checkpoint; floats at full round-trip precision."""
    doc = {
        "format": CHECKPOINT_FORMAT,
        "iteration": int(iteration),
        "metrics": metrics or {},
        "config": config.to_dict(),
        "curves": {
            "canvas_w": curves.canvas_w,
            "canvas_h": curves.canvas_h,
            "background": curves.background.tolist(),
            "strokes": {
                "points": curves.stroke_points.tolist(),
                "widths": curves.stroke_widths.tolist(),
                "colors": curves.stroke_colors.tolist(),
                "opacities": curves.stroke_opacities.tolist(),
            },
            "regions": {
                "points": curves.region_points.tolist(),
                "colors": curves.region_colors.tolist(),
                "opacities": curves.region_opacities.tolist(),
            },
        },
    }
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as f:
        json.dump(doc, f, indent=1)
        f.write("\n")
    os.replace(tmp, path)


class Checkpoint:
    def __init__(self, curves: CurveSet, config: TrainerConfig,
                 iteration: int, metrics: dict):
        self.curves = curves
        self.config = config
        self.iteration = iteration
        self.metrics = metrics


def load_checkpoint(path) -> Checkpoint:
    """Parse and validate a checkpoint; no partial state on failure."""
    try:
        with open(path, "r", encoding="utf-8") as f:
            doc = json.load(f)
    except FileNotFoundError:
        raise CheckpointError(f"checkpoint not found: {path}") from None
    except json.JSONDecodeError as e:
        raise CheckpointError(f"corrupt checkpoint {path}: {e}") from None

    fmt = doc.get("format")
    if fmt != CHECKPOINT_FORMAT:
        raise CheckpointError(
            f"unsupported checkpoint version {fmt!r} (supported: {CHECKPOINT_FORMAT})")
    try:
        cdoc = doc["curves"]
        cs = CurveSet(int(cdoc["canvas_w"]), int(cdoc["canvas_h"]),
                      np.asarray(cdoc["background"], dtype=float))
        s = cdoc["strokes"]
        cs.stroke_points = np.asarray(s["points"], dtype=float).reshape(-1, 10, 2)
        cs.stroke_widths = np.asarray(s["widths"], dtype=float)
        cs.stroke_colors = np.asarray(s["colors"], dtype=float).reshape(-1, 3)
        cs.stroke_opacities = np.asarray(s["opacities"], dtype=float).reshape(-1, 3)
        r = cdoc["regions"]
        cs.region_points = np.asarray(r["points"], dtype=float).reshape(-1, 6, 2)
        cs.region_colors = np.asarray(r["colors"], dtype=float).reshape(-1, 3)
        cs.region_opacities = np.asarray(r["opacities"], dtype=float).reshape(-1, 3)
        config = TrainerConfig.from_dict(doc["config"])
        iteration = int(doc.get("iteration", 0))
        metrics = doc.get("metrics", {})
    except (KeyError, TypeError, ValueError) as e:
        raise CheckpointError(f"invalid checkpoint {path}: {e}") from None

    n_s = len(cs.stroke_points)
    if not (len(cs.stroke_widths) == len(cs.stroke_colors)
            == len(cs.stroke_opacities) == n_s):
        raise CheckpointError(f"invalid checkpoint {path}: inconsistent stroke arrays")
    n_r = len(cs.region_points)
    if not (len(cs.region_colors) == len(cs.region_opacities) == n_r):
        raise CheckpointError(f"invalid checkpoint {path}: inconsistent region arrays")
    if not cs.finite():
        raise CheckpointError(f"invalid checkpoint {path}: non-finite parameters")
    if (cs.stroke_widths <= 0).any():
        raise CheckpointError(f"invalid checkpoint {path}: non-positive stroke width")
    for arr in (cs.stroke_colors, cs.stroke_opacities, cs.region_colors,
                cs.region_opacities):
        if arr.size and (arr.min() < -1e-9 or arr.max() > 1 + 1e-9):
            raise CheckpointError(f"invalid checkpoint {path}: color/opacity out of [0,1]")
    return Checkpoint(cs, config, iteration, metrics)


def scale_curve_set(curves: CurveSet, new_w: int, new_h: int) -> CurveSet:
    """Proportionally rescaled copy for resolution-free re-rendering.

    Control points scale per axis; stroke widths scale by the geometric mean
    of the two axis factors.
    """
    sx = new_w / curves.canvas_w
    sy = new_h / curves.canvas_h
    out = curves.copy()
    out.canvas_w, out.canvas_h = int(new_w), int(new_h)
    out.stroke_points[..., 0] *= sx
    out.stroke_points[..., 1] *= sy
    out.region_points[..., 0] *= sx
    out.region_points[..., 1] *= sy
    out.stroke_widths *= math.sqrt(sx * sy)
    return out
