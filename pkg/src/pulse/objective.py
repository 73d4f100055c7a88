"""Downscaling loss, pairwise style penalties, and the combined objective graph."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Graph
from .generator import GeneratorSpec, build_synthesis, state_bindings

VARIANTS = ("geodesic", "euclidean")


@dataclass(frozen=True)
class ObjectiveConfig:
    p: int = 2
    geocross: float = 0.01
    variant: str = "geodesic"
    eps: float = 1e-3

    def __post_init__(self):
        if self.p not in (1, 2):
            raise ValueError("p must be 1 or 2")
        if self.geocross < 0:
            raise ValueError("geocross weight must be non-negative")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        if not self.eps > 0:
            raise ValueError("eps must be positive")


def downscaling_loss(sr, lr, resampler, p: int = 2) -> float:
    """Mean over LR pixels of |DS(sr) - lr|^p."""
    lr = np.asarray(lr, dtype=np.float64)
    down = resampler.apply(sr)
    if down.shape != lr.shape:
        raise ValueError(f"downscaled SR has shape {down.shape}, LR has {lr.shape}")
    return float(np.mean(np.abs(down - lr) ** p))


def cross_loss(styles) -> float:
    """Sum over pairs i<j of squared Euclidean distances."""
    v = np.atleast_2d(np.asarray(styles, dtype=np.float64))
    diff = v[:, None, :] - v[None, :, :]
    return float(np.sum(np.triu(np.sum(diff * diff, axis=-1), 1)))


def cross_grad(styles) -> np.ndarray:
    v = np.atleast_2d(np.asarray(styles, dtype=np.float64))
    return 2.0 * (len(v) * v - v.sum(axis=0))


def _unit_rows(v):
    norms = np.linalg.norm(v, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise ValueError("geodesic cross loss is undefined for a zero vector")
    return v / norms, norms


def pairwise_angles(styles) -> np.ndarray:
    """(k, k) angles via atan2(|rejection|, inner product).

    The rejection of v_j from v_i is formed from the raw vectors, so equal
    pairs give exactly 0 and antipodal pairs exactly pi.
    """
    v = np.atleast_2d(np.asarray(styles, dtype=np.float64))
    _, norms = _unit_rows(v)
    dots = v @ v.T
    coef = dots / np.diag(dots)[:, None]
    rej = v[None, :, :] - coef[:, :, None] * v[:, None, :]
    theta = np.arctan2(np.linalg.norm(rej, axis=-1) * norms, dots)
    upper = np.triu(theta, 1)
    return upper + upper.T


def geocross_loss(styles) -> float:
    """Sum over pairs i<j of the squared angle between styles i and j."""
    theta = pairwise_angles(styles)
    return float(np.sum(np.triu(theta * theta, 1)))


def geocross_grad(styles) -> np.ndarray:
    v = np.atleast_2d(np.asarray(styles, dtype=np.float64))
    u, norms = _unit_rows(v)
    theta = pairwise_angles(v)
    cos = np.cos(theta)
    # d theta_ij / d v_i points along cos*u_i - u_j (length sin theta), scaled by 1/|v_i|
    e = cos[:, :, None] * u[:, None, :] - u[None, :, :]
    n = np.linalg.norm(e, axis=-1, keepdims=True)
    direction = np.divide(e, n, out=np.zeros_like(e), where=n > 0)
    return np.sum(2.0 * theta[:, :, None] * direction, axis=1) / norms


PENALTIES = {
    "geodesic": (geocross_loss, geocross_grad),
    "euclidean": (cross_loss, cross_grad),
}


def add_penalty(g: Graph, styles, variant: str, name: str | None = None):
    loss, grad = PENALTIES[variant]
    return g.custom(
        [styles],
        forward=lambda v: np.asarray(loss(v)),
        backward=lambda gout, v: (float(gout) * grad(v),),
        name=name,
    )


def objective_graph(spec: GeneratorSpec, resampler, config: ObjectiveConfig,
                    trainable_noise_count: int = 0) -> Graph:
    """Graph with inputs ``styles``, ``noise0..``, ``lr`` and output ``total``.

    Named values: ``image``, ``ds_loss``, ``penalty``, ``total``.
    """
    if resampler.input_dims != (spec.resolution, spec.resolution):
        raise ValueError(f"resampler expects {resampler.input_dims}, generator makes "
                         f"{spec.resolution}x{spec.resolution}")
    key = ("objective", id(resampler), config, trainable_noise_count)
    cached = spec._cache.get(key)
    if cached is not None and cached[0] is resampler:
        return cached[1]
    g = Graph()
    styles = g.input("styles", (spec.k, spec.d), trainable=True)
    noise = [g.input(f"noise{i}", shape, trainable=i < trainable_noise_count)
             for i, shape in enumerate(spec.noise_shapes)]
    lr_shape = resampler.output_dims + spec.image_shape[2:]
    lr = g.input("lr", lr_shape)
    image = build_synthesis(g, spec, styles, noise, name="image")
    resid = g.sub(g.resample(image, resampler), lr)
    ds = g.scale(g.sum(g.abs_pow(resid, config.p)), 1.0 / np.prod(lr_shape), name="ds_loss")
    penalty = add_penalty(g, styles, config.variant, name="penalty")
    total = g.add(ds, g.scale(penalty, config.geocross), name="total")
    g.set_output(total)
    spec._cache[key] = (resampler, g)
    return g


def total_objective(state, spec: GeneratorSpec, lr_image, resampler, config: ObjectiveConfig):
    """(total, gradients) at ``state``; gradients cover styles and trainable noise maps."""
    state.check(spec)
    g = objective_graph(spec, resampler, config, state.trainable_noise_count)
    bindings = state_bindings(state)
    bindings["lr"] = lr_image
    values, grads = g.value_and_grad(bindings)
    return float(values["total"]), grads
