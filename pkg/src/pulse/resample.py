"""Separable linear downscaling operators with exact adjoints.

A :class:`LinearResampler` stores one dense weight matrix per axis, so
``apply`` is ``R_h @ X @ R_w.T`` (per channel) and the adjoint is
``R_h.T @ Y @ R_w``. Images are ``(H, W)`` or ``(H, W, C)`` arrays.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

KERNELS = ("bicubic", "box")


def cubic(x, a: float = -0.5):
    """Keys cubic convolution kernel; ``a=-0.5`` is Catmull-Rom."""
    x = np.abs(np.asarray(x, dtype=np.float64))
    x2, x3 = x * x, x * x * x
    near = (a + 2) * x3 - (a + 3) * x2 + 1
    far = a * x3 - 5 * a * x2 + 8 * a * x - 4 * a
    return np.where(x <= 1, near, np.where(x < 2, far, 0.0))


def _axis_weights(kernel: str, size_in: int, factor: int) -> np.ndarray:
    """(size_in // factor, size_in) row-stochastic matrix for one axis."""
    size_out = size_in // factor
    mat = np.zeros((size_out, size_in))
    if kernel == "box":
        for i in range(size_out):
            mat[i, i * factor : (i + 1) * factor] = 1.0 / factor
        return mat
    # antialiased: kernel stretched by the factor, support 2*factor each side
    support = 2 * factor
    for i in range(size_out):
        center = (i + 0.5) * factor - 0.5
        lo = int(np.floor(center - support))
        hi = int(np.ceil(center + support))
        taps = np.arange(lo, hi + 1)
        w = cubic((taps - center) / factor)
        # edge replication: out-of-range taps fold onto the border pixel
        np.add.at(mat[i], np.clip(taps, 0, size_in - 1), w)
        mat[i] /= mat[i].sum()
    return mat


@dataclass(frozen=True, eq=False)
class LinearResampler:
    kernel: str
    input_dims: tuple[int, int]
    output_dims: tuple[int, int]
    factor: int
    rows: np.ndarray  # (m, M)
    cols: np.ndarray  # (n, N)
    boundary: str = "replicate"

    def _check(self, image: np.ndarray, dims: tuple[int, int], what: str) -> None:
        if image.ndim not in (2, 3) or tuple(image.shape[:2]) != dims:
            raise ValueError(f"{what}: expected image of size {dims}, got {image.shape}")

    def apply(self, image: np.ndarray) -> np.ndarray:
        image = np.asarray(image, dtype=np.float64)
        self._check(image, self.input_dims, "apply")
        out = np.tensordot(self.rows, image, axes=(1, 0))
        out = np.tensordot(self.cols, out, axes=(1, 1))  # (n, m, ...)
        return np.ascontiguousarray(np.swapaxes(out, 0, 1))

    def adjoint_apply(self, image: np.ndarray) -> np.ndarray:
        image = np.asarray(image, dtype=np.float64)
        self._check(image, self.output_dims, "adjoint_apply")
        out = np.tensordot(self.rows.T, image, axes=(1, 0))
        out = np.tensordot(self.cols.T, out, axes=(1, 1))
        return np.ascontiguousarray(np.swapaxes(out, 0, 1))

    def dense_matrix(self) -> np.ndarray:
        """The operator as an explicit (m*n, M*N) matrix on row-major single-channel images."""
        return np.kron(self.rows, self.cols)

    def __call__(self, image):
        return self.apply(image)


def build_downscaler(kernel: str, hr_dims, factor: int) -> LinearResampler:
    if kernel not in KERNELS:
        raise ValueError(f"unknown kernel {kernel!r}; expected one of {KERNELS}")
    if int(factor) != factor or factor < 2:
        raise ValueError(f"factor must be an integer >= 2, got {factor}")
    factor = int(factor)
    h, w = (int(hr_dims), int(hr_dims)) if np.isscalar(hr_dims) else map(int, hr_dims)
    if h % factor or w % factor:
        raise ValueError(f"dims {(h, w)} are not divisible by factor {factor}")
    rows = _axis_weights(kernel, h, factor)
    cols = rows if w == h else _axis_weights(kernel, w, factor)
    rows.flags.writeable = False
    cols.flags.writeable = False
    return LinearResampler(kernel, (h, w), (h // factor, w // factor), factor, rows, cols)
