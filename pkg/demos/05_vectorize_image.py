"""End-to-end vectorization of the committed landscape fixture.

A short desk-scale run (128 open curves, 800 iterations on a 192x192 crop)
with adaptive prune/densify on, finishing with PNG, SVG and checkpoint
outputs plus the metric trace. The full-quality settings live in the
acceptance suite; this demo favors wall time.

Run:  python demos/05_vectorize_image.py           (about two minutes)
Writes demos/output/05_* and prints the trace.
"""

import os

import numpy as np

from bsplat.config import TrainerConfig
from bsplat.io_formats import export_svg, load_image, save_checkpoint, save_image
from bsplat.metrics import psnr, ssim
from bsplat.trainer import forward, train

OUT = os.path.join(os.path.dirname(__file__), "output")
os.makedirs(OUT, exist_ok=True)
FIXTURE = os.path.join(os.path.dirname(__file__), os.pardir, "tests",
                       "fixtures", "landscape_384.png")

target = load_image(FIXTURE)[96:288, 96:288]
save_image(target, os.path.join(OUT, "05_target.png"))

cfg = TrainerConfig(mode="open", n_curves=128, iters=800, seed=0,
                    trace_every=200)
res = train(target, cfg)
print("trace (iter, l2, psnr, curves, pruned, added):")
for t in res.trace:
    print(f"  {t.iteration:5d}  {t.l2:.5f}  {t.psnr:6.2f}  "
          f"{t.curve_count:4d}  {t.pruned:3d}  {t.added:3d}")

_, _, buf = forward(res.curves, cfg)
save_image(buf, os.path.join(OUT, "05_result.png"))
export_svg(res.curves, os.path.join(OUT, "05_result.svg"))
save_checkpoint(os.path.join(OUT, "05_result.ckpt"), res.curves, cfg,
                iteration=cfg.resolved_iters(),
                metrics={"psnr": res.final_psnr})

print(f"\nfinal: PSNR {psnr(buf.color.astype(float), target):.2f} dB, "
      f"SSIM {ssim(buf.color.astype(float), target):.3f}")
print(f"outputs in {OUT}/05_result.(png|svg|ckpt)")
