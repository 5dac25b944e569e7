"""Image quality metrics for evaluation traces and acceptance tests.

PSNR assumes [0,1] range. SSIM follows the standard 11x11 Gaussian window
(sigma 1.5, C1 = 0.01^2, C2 = 0.03^2), computed per channel and averaged;
windows are reflect-padded so maps keep full size (this also keeps the
5-scale multi-scale variant well defined at its 160-pixel minimum, where a
valid 11x11 window would no longer fit the coarsest scale).
"""

from __future__ import annotations

import math

import numpy as np
from scipy.ndimage import correlate1d

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
C1 = 0.01 ** 2
C2 = 0.03 ** 2
MS_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)
MS_MIN_DIM = 160


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB; identical images give math.inf."""
    a, b = _checked_pair(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def _gauss_kernel() -> np.ndarray:
    r = SSIM_WINDOW // 2
    x = np.arange(-r, r + 1, dtype=np.float64)
    k = np.exp(-(x * x) / (2.0 * SSIM_SIGMA ** 2))
    return k / k.sum()


def _filt(img: np.ndarray) -> np.ndarray:
    k = _gauss_kernel()
    # "mirror" = numpy-style reflection about the edge pixel
    out = correlate1d(img, k, axis=0, mode="mirror")
    return correlate1d(out, k, axis=1, mode="mirror")


def _ssim_maps(a: np.ndarray, b: np.ndarray):
    mu1, mu2 = _filt(a), _filt(b)
    mu11, mu22, mu12 = mu1 * mu1, mu2 * mu2, mu1 * mu2
    s11 = _filt(a * a) - mu11
    s22 = _filt(b * b) - mu22
    s12 = _filt(a * b) - mu12
    lum = (2.0 * mu12 + C1) / (mu11 + mu22 + C1)
    cs = (2.0 * s12 + C2) / (s11 + s22 + C2)
    return lum, cs


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Mean structural similarity, per channel then averaged."""
    a, b = _checked_pair(a, b)
    vals = []
    for ch in range(a.shape[-1]):
        lum, cs = _ssim_maps(a[..., ch], b[..., ch])
        vals.append(np.mean(lum * cs))
    return float(np.mean(vals))


def _downsample(img: np.ndarray) -> np.ndarray:
    h, w = (img.shape[0] // 2) * 2, (img.shape[1] // 2) * 2
    c = img[:h, :w]
    return 0.25 * (c[0::2, 0::2] + c[1::2, 0::2] + c[0::2, 1::2] + c[1::2, 1::2])


def ms_ssim(a: np.ndarray, b: np.ndarray) -> float:
    """5-scale multi-scale SSIM (standard weights); needs min dim >= 160."""
    a, b = _checked_pair(a, b)
    if min(a.shape[0], a.shape[1]) < MS_MIN_DIM:
        raise ValueError(f"ms_ssim needs min dimension >= {MS_MIN_DIM} for 5 scales, "
                         f"got {a.shape[:2]}")
    vals = []
    for ch in range(a.shape[-1]):
        x, y = a[..., ch], b[..., ch]
        score = 1.0
        for level, weight in enumerate(MS_WEIGHTS):
            lum, cs = _ssim_maps(x, y)
            if level == len(MS_WEIGHTS) - 1:
                score *= np.maximum(float(np.mean(lum * cs)), 0.0) ** weight
            else:
                score *= np.maximum(float(np.mean(cs)), 0.0) ** weight
                x, y = _downsample(x), _downsample(y)
        vals.append(score)
    return float(np.mean(vals))


def _checked_pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"image shapes differ: {a.shape} vs {b.shape}")
    if a.ndim == 2:
        a, b = a[..., None], b[..., None]
    return a, b
