"""Differentiable vector graphics via gaussian-splatted Bezier curves."""

from .config import TrainerConfig
from .curve_model import BezierSegment, ClosedRegion, CurveSet, OpenStroke
from .splat_sampler import Gaussian2D, SplatBatch, build_batch
from .rasterizer import RenderBuffer, render, render_bruteforce
from .autograd import GradientBuffer, backward_blend, backward_sampling, check_gradients
from .losses import LossReport, l2_loss, xing_loss
from .metrics import ms_ssim, psnr, ssim
from .trainer import TrainResult, init_curves, train
from .io_formats import (export_svg, load_checkpoint, load_image,
                         save_checkpoint, save_image)

__version__ = "0.1.0"

__all__ = [
    "TrainerConfig", "CurveSet", "OpenStroke", "ClosedRegion", "BezierSegment",
    "Gaussian2D", "SplatBatch", "build_batch", "RenderBuffer", "render",
    "render_bruteforce", "GradientBuffer", "backward_blend", "backward_sampling",
    "check_gradients", "LossReport", "l2_loss", "xing_loss", "psnr", "ssim",
    "ms_ssim", "TrainResult", "init_curves", "train", "export_svg",
    "load_checkpoint", "load_image", "save_checkpoint", "save_image",
]
