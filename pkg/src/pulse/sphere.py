"""Geometry of the radius-sqrt(d) sphere: sampling, retraction, steps, norm statistics."""

from __future__ import annotations

import math

import numpy as np

RETRACTIONS = ("tangent", "renormalize")


def sample_sphere(d: int, seed=None, size: int | None = None) -> np.ndarray:
    """Uniform sample(s) on sqrt(d) * S^(d-1): a Gaussian draw rescaled to norm sqrt(d)."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    shape = (d,) if size is None else (size, d)
    z = rng.standard_normal(shape)
    return project_sphere(z, math.sqrt(d))


def project_sphere(v, radius: float) -> np.ndarray:
    """Rescale ``v`` (or each row of a matrix) to norm ``radius``."""
    v = np.asarray(v, dtype=np.float64)
    norm = np.linalg.norm(v, axis=-1, keepdims=True)
    if np.any(norm == 0):
        raise ValueError("cannot project the zero vector onto a sphere")
    return radius * v / norm


def tangent_component(v: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Remove the radial part of ``g`` at each row of ``v``."""
    vhat = v / np.linalg.norm(v, axis=-1, keepdims=True)
    return g - np.sum(g * vhat, axis=-1, keepdims=True) * vhat


def spherical_step(styles, grads, lr: float, mode: str = "tangent") -> np.ndarray:
    """One projected gradient step per row, retracted to radius sqrt(d).

    If a row lands on the origin the step is retried for that row with the
    learning rate halved.
    """
    if mode not in RETRACTIONS:
        raise ValueError(f"unknown retraction {mode!r}")
    styles = np.atleast_2d(np.asarray(styles, dtype=np.float64))
    grads = np.atleast_2d(np.asarray(grads, dtype=np.float64))
    radius = math.sqrt(styles.shape[-1])
    if mode == "tangent":
        grads = tangent_component(styles, grads)
    out = np.empty_like(styles)
    for i, (v, g) in enumerate(zip(styles, grads)):
        step = lr
        nxt = v - step * g
        while not np.any(nxt):
            step *= 0.5
            nxt = v - step * g
        out[i] = project_sphere(nxt, radius)
    return out


def gaussian_norm_stats(d: int, n_samples: int, seed=None) -> dict[str, float]:
    """Monte Carlo norm statistics of standard Gaussians in R^d."""
    rng = np.random.default_rng(seed)
    norms = np.empty(n_samples)
    chunk = max(1, 2_000_000 // max(d, 1))
    for start in range(0, n_samples, chunk):
        stop = min(n_samples, start + chunk)
        norms[start:stop] = np.linalg.norm(rng.standard_normal((stop - start, d)), axis=1)
    r = math.sqrt(d)
    within = np.mean((norms >= 0.9 * r) & (norms <= 1.1 * r))
    return {
        "mean_norm": float(norms.mean()),
        "std_norm": float(norms.std()),
        "fraction_within_10pct": float(within),
    }


def norm_penalty_descent(d: int, steps: int, lr: float, seed=None) -> dict[str, np.ndarray]:
    """Minimize ||z||^2 from a typical Gaussian start, with and without the sphere constraint.

    Returns the norm after each step for both methods. The unconstrained
    iterate shrinks geometrically toward the origin; the constrained one stays
    at sqrt(d), where the Gaussian mass actually lives.
    """
    if not 0 < lr < 0.5:
        raise ValueError("lr must be in (0, 0.5) for plain descent on ||z||^2 to shrink monotonically")
    z0 = sample_sphere(d, seed)
    free, fixed = z0.copy(), z0[None].copy()
    free_norms, fixed_norms = [np.linalg.norm(free)], [np.linalg.norm(fixed)]
    for _ in range(steps):
        free = free - lr * 2.0 * free
        free_norms.append(np.linalg.norm(free))
        fixed = spherical_step(fixed, 2.0 * fixed, lr, mode="renormalize")
        fixed_norms.append(np.linalg.norm(fixed))
    return {"penalty": np.array(free_norms), "sphere": np.array(fixed_norms)}
