"""Image quality metrics on [0, 1] intensities."""

from __future__ import annotations

import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

SSIM_WINDOW = 8
SSIM_C1 = 0.01**2
SSIM_C2 = 0.03**2


def _pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"image shapes differ: {a.shape} vs {b.shape}")
    return a, b


def mse(a, b) -> float:
    a, b = _pair(a, b)
    return float(np.mean((a - b) ** 2))


def psnr(a, b) -> float:
    """Peak signal-to-noise ratio in dB for peak value 1; ``inf`` for identical images.

    Identical to the 8-bit convention 10*log10(255^2 / MSE_255).
    """
    err = mse(a, b)
    if err == 0:
        return math.inf
    return 10.0 * math.log10(1.0 / err)


def _window_stats(a, b, win):
    wa = sliding_window_view(a, (win, win), axis=(0, 1))
    wb = sliding_window_view(b, (win, win), axis=(0, 1))
    axes = (-2, -1)
    mu_a, mu_b = wa.mean(axis=axes), wb.mean(axis=axes)
    var_a = wa.var(axis=axes)
    var_b = wb.var(axis=axes)
    cov = (wa * wb).mean(axis=axes) - mu_a * mu_b
    return mu_a, mu_b, var_a, var_b, cov


def ssim_maps(a, b, window: int = SSIM_WINDOW, c1: float = SSIM_C1, c2: float = SSIM_C2):
    """Luminance and contrast-structure maps over every ``window`` x ``window`` patch."""
    a, b = _pair(a, b)
    if a.shape[0] < window or a.shape[1] < window:
        raise ValueError(f"images must be at least {window}x{window}")
    mu_a, mu_b, var_a, var_b, cov = _window_stats(a, b, window)
    lum = (2 * mu_a * mu_b + c1) / (mu_a**2 + mu_b**2 + c1)
    cs = (2 * cov + c2) / (var_a + var_b + c2)
    return lum, cs


def ssim(a, b, window: int = SSIM_WINDOW, c1: float = SSIM_C1, c2: float = SSIM_C2) -> float:
    """Mean single-scale SSIM with a uniform sliding window (channels averaged)."""
    lum, cs = ssim_maps(a, b, window, c1, c2)
    return float(np.mean(lum * cs))


def pixelwise_mean_minimizer(images) -> np.ndarray:
    """Pixelwise mean: the minimizer of the summed squared distance to every image."""
    stack = np.stack([np.asarray(im, dtype=np.float64) for im in images])
    if len(stack) == 0:
        raise ValueError("need at least one image")
    return stack.mean(axis=0)


def squared_distance_sum(candidate, images) -> float:
    c = np.asarray(candidate, dtype=np.float64)
    return float(sum(np.sum((np.asarray(im) - c) ** 2) for im in images))
