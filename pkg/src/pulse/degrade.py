"""Degradations for robustness sweeps.

Noise parameters use the 0-255 intensity convention and are converted to the
internal [0, 1] range. Nothing here clamps its output.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage


def degrade_gaussian(image, std: float, seed: int) -> np.ndarray:
    if std < 0:
        raise ValueError("std must be non-negative")
    image = np.asarray(image, dtype=np.float64)
    if std == 0:
        return image.copy()
    rng = np.random.default_rng(seed)
    return image + rng.normal(0.0, std / 255.0, size=image.shape)


def motion_blur_length(height: int, length_1024: int) -> int:
    """Kernel length rescaled from a 1024-pixel-high image to ``height``."""
    if length_1024 < 1:
        raise ValueError("length must be >= 1")
    return max(1, int(np.floor(length_1024 * height / 1024 + 0.5)))


def line_kernel(length: int, angle: float) -> np.ndarray:
    """Normalized line of ``length`` pixels through the centre at ``angle`` radians.

    Sample points are spread bilinearly onto the grid, so arbitrary angles
    give a kernel that still sums to one.
    """
    if length <= 1:
        return np.ones((1, 1))
    half = (length - 1) / 2.0
    r = int(np.ceil(half)) + 1
    k = np.zeros((2 * r + 1, 2 * r + 1))
    n = 4 * length
    for t in np.linspace(-half, half, n):
        y = r - t * np.sin(angle)
        x = r + t * np.cos(angle)
        y0, x0 = int(np.floor(y)), int(np.floor(x))
        fy, fx = y - y0, x - x0
        k[y0, x0] += (1 - fy) * (1 - fx)
        k[y0, x0 + 1] += (1 - fy) * fx
        k[y0 + 1, x0] += fy * (1 - fx)
        k[y0 + 1, x0 + 1] += fy * fx
    return k / k.sum()


def degrade_motion_blur(image, length_1024: int, seed: int) -> np.ndarray:
    image = np.asarray(image, dtype=np.float64)
    length = motion_blur_length(image.shape[0], length_1024)
    angle = np.random.default_rng(seed).uniform(0.0, np.pi)
    k = line_kernel(length, angle)
    if image.ndim == 3:
        return np.stack([ndimage.convolve(image[..., c], k, mode="nearest")
                         for c in range(image.shape[2])], axis=-1)
    return ndimage.convolve(image, k, mode="nearest")


def degrade_salt_pepper(image, density: float, seed: int) -> np.ndarray:
    if not 0 <= density <= 1:
        raise ValueError("density must be in [0, 1]")
    image = np.asarray(image, dtype=np.float64)
    out = image.copy()
    rng = np.random.default_rng(seed)
    hw = image.shape[:2]
    hit = rng.random(hw) < density
    salt = rng.random(hw) < 0.5
    value = salt[hit].astype(np.float64)
    out[hit] = value[:, None] if image.ndim == 3 else value
    return out


DEGRADATIONS = {
    "gaussian": degrade_gaussian,
    "blur": degrade_motion_blur,
    "saltpepper": degrade_salt_pepper,
}


def degrade(image, op: str, param, seed: int) -> np.ndarray:
    try:
        fn = DEGRADATIONS[op]
    except KeyError:
        raise ValueError(f"unknown degradation {op!r}") from None
    if op == "blur":
        if param == 0:
            return np.asarray(image, dtype=np.float64).copy()
        param = int(param)
    return fn(image, param, seed)
