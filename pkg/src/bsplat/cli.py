"""Command-line front end: vectorize an image, re-render or export a
checkpoint, and benchmark the forward/backward kernels.

Config precedence: built-in defaults < --config file < explicit flags.
Exit codes: 0 ok, 2 usage/input error, 3 data (checkpoint) error.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import statistics
import sys
import time

import numpy as np

from .autograd import backward_blend, backward_sampling
from .config import TrainerConfig
from .io_formats import (CheckpointError, export_svg, load_checkpoint,
                         load_image, save_checkpoint, save_image,
                         scale_curve_set)
from .losses import l2_loss
from .trainer import (TrainResult, forward, init_curves, set_threads,
                      trace_to_csv, train)


def _parse_hex(s: str):
    s = s.lstrip("#")
    if len(s) != 6:
        raise argparse.ArgumentTypeError(f"expected RRGGBB hex color, got {s!r}")
    return tuple(int(s[i:i + 2], 16) / 255.0 for i in (0, 2, 4))


def _load_config_file(path) -> dict:
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def _build_config(args) -> TrainerConfig:
    """defaults < --config file < explicit flags."""
    base = TrainerConfig().to_dict()
    if getattr(args, "config", None):
        base.update(_load_config_file(args.config))
    overrides = {
        "mode": args.mode, "n_curves": args.curves, "iters": args.iters,
        "seed": args.seed, "threads": args.threads,
        "opacity_count": args.opacity_count, "init_color": args.init_color,
        "background": args.background,
    }
    if args.no_adapt:
        overrides["adapt_enabled"] = False
    if args.deterministic is not None:
        overrides["deterministic"] = args.deterministic
    if args.save_every:
        overrides["trace_every"] = args.save_every
    for key, val in overrides.items():
        if val is not None:
            base[key] = val
    return TrainerConfig.from_dict(base)


def cmd_vectorize(args) -> int:
    if not os.path.exists(args.input):
        print(f"input not found: {args.input}", file=sys.stderr)
        return 2
    cfg = _build_config(args)
    if cfg.n_curves < 1:
        print("need at least one curve (--curves)", file=sys.stderr)
        return 2
    target = load_image(args.input, background=cfg.background)
    os.makedirs(args.out, exist_ok=True)

    def snapshot(iteration, curves, buf):
        if args.save_every:
            save_image(buf, os.path.join(args.out, f"iter_{iteration:05d}.png"))

    result: TrainResult = train(target, cfg, snapshot_cb=snapshot)
    _, _, buf = forward(result.curves, cfg)
    save_image(buf, os.path.join(args.out, "final.png"))
    export_svg(result.curves, os.path.join(args.out, "final.svg"))
    save_checkpoint(os.path.join(args.out, "final.ckpt"), result.curves, cfg,
                    iteration=cfg.resolved_iters(),
                    metrics={"l2": result.final_l2, "psnr": result.final_psnr})
    with open(os.path.join(args.out, "trace.csv"), "w", encoding="utf-8") as f:
        f.write(trace_to_csv(result.trace))
    print(f"final l2={result.final_l2:.6g} psnr={result.final_psnr:.3f} dB "
          f"curves={result.curves.n_curves}")
    return 0


def cmd_render(args) -> int:
    ck = load_checkpoint(args.checkpoint)
    curves = ck.curves
    w = args.width or curves.canvas_w
    h = args.height or curves.canvas_h
    if (w, h) != (curves.canvas_w, curves.canvas_h):
        curves = scale_curve_set(curves, w, h)
    if args.background is not None:
        curves.background = np.asarray(args.background, dtype=float)
    cfg = ck.config
    if args.threads is not None:
        cfg = cfg.replace(threads=args.threads)
    set_threads(cfg)
    _, _, buf = forward(curves, cfg)
    save_image(buf, args.out)
    return 0


def cmd_export_svg(args) -> int:
    ck = load_checkpoint(args.checkpoint)
    export_svg(ck.curves, args.out)
    return 0


def run_bench(n_curves: int, width: int, height: int, mode: str,
              reps: int = 10, threads: int = 0, seed: int = 0) -> dict:
    """Median / p10 / p90 wall time of forward and backward per iteration.

    Forward = splat construction + tiled render; backward = blend adjoint +
    sampling adjoint. The synthetic target is a smooth gradient image.
    """
    cfg = TrainerConfig(mode=mode, n_curves=max(n_curves, 0), seed=seed,
                        threads=threads)
    set_threads(cfg)
    ys, xs = np.mgrid[0:height, 0:width]
    target = np.stack([xs / max(width - 1, 1), ys / max(height - 1, 1),
                       np.full_like(xs, 0.5, dtype=float)], axis=-1).astype(float)
    curves = init_curves(cfg, target) if n_curves > 0 else \
        init_curves(cfg.replace(n_curves=0), target)

    # warmup covers JIT compilation
    batch, ctx, buf = forward(curves, cfg)
    _, dpix, _ = l2_loss(buf.color, target)
    if len(batch):
        backward_sampling(backward_blend(batch, buf, dpix), curves, ctx)

    fwd, bwd = [], []
    n_gauss = len(batch)
    for _ in range(max(reps, 1)):
        t0 = time.perf_counter()
        batch, ctx, buf = forward(curves, cfg)
        t1 = time.perf_counter()
        _, dpix, _ = l2_loss(buf.color, target)
        t2 = time.perf_counter()
        if len(batch):
            g = backward_blend(batch, buf, dpix)
            backward_sampling(g, curves, ctx)
        t3 = time.perf_counter()
        fwd.append((t1 - t0) * 1e3)
        bwd.append((t3 - t2) * 1e3)

    def stats(xs_):
        xs_ = sorted(xs_)
        med = statistics.median(xs_)
        p10 = xs_[max(0, int(math.floor(0.1 * (len(xs_) - 1))))]
        p90 = xs_[min(len(xs_) - 1, int(math.ceil(0.9 * (len(xs_) - 1))))]
        return med, p10, p90

    fm, f10, f90 = stats(fwd)
    bm, b10, b90 = stats(bwd)
    total = [f + b for f, b in zip(fwd, bwd)]
    tm, t10, t90 = stats(total)
    gps = n_gauss / (tm / 1e3) if tm > 0 else 0.0
    return {
        "n_gaussians": n_gauss, "reps": max(reps, 1),
        "forward_ms": (fm, f10, f90), "backward_ms": (bm, b10, b90),
        "total_ms": (tm, t10, t90), "gaussians_per_sec": gps,
        "mode": mode, "curves": n_curves, "width": width, "height": height,
    }


def cmd_bench(args) -> int:
    r = run_bench(args.curves, args.width, args.height, args.mode,
                  reps=args.reps, threads=args.threads or 0)
    print(f"bench: {r['curves']} curves ({r['n_gaussians']} gaussians), "
          f"{r['width']}x{r['height']}, mode={r['mode']}, reps={r['reps']}")
    print(f"{'phase':>10s} {'median_ms':>10s} {'p10_ms':>10s} {'p90_ms':>10s}")
    for name, key in (("forward", "forward_ms"), ("backward", "backward_ms"),
                      ("total", "total_ms")):
        med, p10, p90 = r[key]
        print(f"{name:>10s} {med:10.2f} {p10:10.2f} {p90:10.2f}")
    print(f"gaussians/sec: {r['gaussians_per_sec']:.3e}")
    print("csv: bench,{mode},{curves},{width},{height},{reps},"
          "{f:.3f},{b:.3f},{t:.3f},{g:.1f}".format(
              mode=r["mode"], curves=r["curves"], width=r["width"],
              height=r["height"], reps=r["reps"], f=r["forward_ms"][0],
              b=r["backward_ms"][0], t=r["total_ms"][0],
              g=r["gaussians_per_sec"]))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="bsplat",
        description="Vectorize raster images into Bezier curves via "
                    "gaussian-splatting rasterization.")
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("vectorize", help="optimize curves to match an input image")
    v.add_argument("--input", required=True, help="input PNG image")
    v.add_argument("--mode", choices=["open", "closed"], default=None,
                   help="open strokes or closed filled regions (default open)")
    v.add_argument("--curves", type=int, default=None, help="number of curves")
    v.add_argument("--iters", type=int, default=None,
                   help="iterations (default 15000 open / 10000 closed)")
    v.add_argument("--out", required=True, help="output directory")
    v.add_argument("--seed", type=int, default=None, help="random seed")
    v.add_argument("--config", default=None, help="JSON config file")
    v.add_argument("--save-every", type=int, default=None,
                   help="write iter_XXXXX.png snapshots at this interval")
    v.add_argument("--no-adapt", action="store_true",
                   help="disable adaptive pruning/densification")
    v.add_argument("--opacity-count", type=int, choices=[1, 3], default=None,
                   help="opacity values per curve (ablation)")
    v.add_argument("--init-color", choices=["target", "random"], default=None,
                   help="initialize curve colors from the target or randomly")
    v.add_argument("--threads", type=int, default=None,
                   help="worker thread cap (default: hardware count)")
    v.add_argument("--deterministic", action="store_true", default=None,
                   help="force deterministic reductions (on by default)")
    v.add_argument("--background", type=_parse_hex, default=None,
                   help="canvas background as RRGGBB hex (default white)")
    v.set_defaults(func=cmd_vectorize)

    r = sub.add_parser("render", help="re-render a checkpoint to PNG")
    r.add_argument("--checkpoint", required=True)
    r.add_argument("--out", required=True)
    r.add_argument("--width", type=int, default=None,
                   help="output width (scales the curves proportionally)")
    r.add_argument("--height", type=int, default=None)
    r.add_argument("--background", type=_parse_hex, default=None,
                   help="override background as RRGGBB hex")
    r.add_argument("--threads", type=int, default=None)
    r.set_defaults(func=cmd_render)

    e = sub.add_parser("export-svg", help="export a checkpoint as SVG")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_export_svg)

    b = sub.add_parser("bench", help="time the forward/backward kernels")
    b.add_argument("--curves", type=int, default=512)
    b.add_argument("--width", type=int, default=512)
    b.add_argument("--height", type=int, default=512)
    b.add_argument("--mode", choices=["open", "closed"], default="open")
    b.add_argument("--reps", type=int, default=10)
    b.add_argument("--threads", type=int, default=None)
    b.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CheckpointError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
