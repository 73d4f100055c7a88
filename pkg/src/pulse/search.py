"""Projected gradient search over sphere-constrained styles, with restarts."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .autodiff import NonFiniteError
from .generator import GeneratorSpec, LatentState, initial_state, state_bindings
from .objective import ObjectiveConfig, objective_graph
from .sphere import spherical_step

log = logging.getLogger(__name__)

RESTART_MODES = ("restart", "noise")
OPTIMIZERS = ("sgd", "momentum", "adam")


@dataclass(frozen=True)
class OptimConfig:
    steps: int = 100
    lr: float = 0.4
    restarts: int = 1
    seed: int = 0
    retraction: str = "tangent"
    trainable_noise_count: int | None = None  # None: ceil(k/3)
    noise_lr: float = 0.1
    optimizer: str = "adam"
    momentum: float = 0.9
    beta2: float = 0.999

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if not self.lr > 0 or self.noise_lr < 0:
            raise ValueError("lr must be positive and noise_lr non-negative")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")
        if self.retraction not in ("tangent", "renormalize"):
            raise ValueError(f"unknown retraction {self.retraction!r}")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"optimizer must be one of {OPTIMIZERS}")
        if not 0 <= self.momentum < 1 or not 0 <= self.beta2 < 1:
            raise ValueError("momentum and beta2 must be in [0, 1)")


@dataclass
class RunResult:
    image: np.ndarray
    loss: float
    converged: bool
    trajectory: np.ndarray  # downscaling loss at steps 0..steps
    restart: int
    seed: int
    noise_seed: int | None = None
    styles: np.ndarray | None = field(default=None, repr=False)

    @property
    def best_step(self) -> int:
        return int(np.argmin(self.trajectory))


class SearchError(RuntimeError):
    pass


class Direction:
    """Turns raw gradients into descent directions for one parameter block."""

    def __init__(self, config: OptimConfig, eps: float = 1e-8):
        self.kind = config.optimizer
        self.b1, self.b2, self.eps = config.momentum, config.beta2, eps
        self.m = self.v = None
        self.t = 0

    def __call__(self, g: np.ndarray) -> np.ndarray:
        if self.kind == "sgd":
            return g
        self.t += 1
        if self.m is None:
            self.m = np.zeros_like(g)
            self.v = np.zeros_like(g)
        if self.kind == "momentum":
            self.m = self.b1 * self.m + g
            return self.m
        self.m = self.b1 * self.m + (1 - self.b1) * g
        self.v = self.b2 * self.v + (1 - self.b2) * g * g
        mhat = self.m / (1 - self.b1 ** self.t)
        vhat = self.v / (1 - self.b2 ** self.t)
        return mhat / (np.sqrt(vhat) + self.eps)


def run_pulse(lr_image, spec: GeneratorSpec, resampler, obj_config: ObjectiveConfig,
              opt_config: OptimConfig, noise_seed: int | None = None, restart: int = 0,
              style_norm_log: list | None = None) -> RunResult:
    """One seeded search run. Always returns the best image found.

    ``converged`` is the success flag; a run with ``converged=False`` means no
    image within ``eps`` was found. ``style_norm_log``, if given, receives the
    (k,) style norms after every step.
    """
    lr_image = np.asarray(lr_image, dtype=np.float64)
    expected = resampler.output_dims + spec.image_shape[2:]
    if lr_image.shape != expected:
        raise ValueError(f"LR image has shape {lr_image.shape}, expected {expected}")
    state = initial_state(spec, opt_config.seed, opt_config.trainable_noise_count, noise_seed)
    n_train = state.trainable_noise_count
    graph = objective_graph(spec, resampler, obj_config, n_train)
    noise_lr = opt_config.noise_lr
    radius = math.sqrt(spec.d)

    trajectory = np.empty(opt_config.steps + 1)
    best_loss, best_image, best_styles = math.inf, None, None
    styles_dir = Direction(opt_config)
    noise_dirs = [Direction(opt_config) for _ in range(n_train)]
    for step in range(opt_config.steps + 1):
        bindings = state_bindings(state)
        bindings["lr"] = lr_image
        try:
            values, grads = graph.value_and_grad(bindings)
        except NonFiniteError as exc:
            raise SearchError(f"step {step}: {exc}") from exc
        loss = float(values["ds_loss"])
        trajectory[step] = loss
        if loss < best_loss:
            best_loss = loss
            best_image = values["image"].copy()
            best_styles = state.styles.copy()
        if step == opt_config.steps:
            break
        g = styles_dir(grads["styles"])
        state.styles = spherical_step(state.styles, g, opt_config.lr, opt_config.retraction)
        for i in range(n_train):
            state.noise[i] = state.noise[i] - noise_lr * noise_dirs[i](grads[f"noise{i}"])
        if style_norm_log is not None:
            style_norm_log.append(np.linalg.norm(state.styles, axis=1) / radius)
    return RunResult(best_image, best_loss, best_loss <= obj_config.eps, trajectory,
                     restart, opt_config.seed, noise_seed, best_styles)


def _run_job(args):
    return run_pulse(*args)


def restart_seeds(opt_config: OptimConfig, n: int, mode: str) -> list[tuple[int, int | None]]:
    """(style seed, noise seed) per restart.

    ``restart`` draws fresh styles and noise per run; ``noise`` keeps the
    first run's styles and resamples only the noise.
    """
    if mode not in RESTART_MODES:
        raise ValueError(f"unknown restart mode {mode!r}")
    base = opt_config.seed
    if mode == "restart":
        return [(base + i, None) for i in range(n)]
    return [(base, None if i == 0 else base + i) for i in range(n)]


def multi_restart(lr_image, spec: GeneratorSpec, resampler, obj_config: ObjectiveConfig,
                  opt_config: OptimConfig, n: int | None = None, mode: str = "restart",
                  jobs: int = 1) -> list[RunResult]:
    """``n`` independent runs, sorted by best downscaling loss (ties keep run order)."""
    n = opt_config.restarts if n is None else n
    jobs_args = [
        (lr_image, spec, resampler, obj_config, replace(opt_config, seed=s), ns, i)
        for i, (s, ns) in enumerate(restart_seeds(opt_config, n, mode))
    ]
    if jobs > 1 and n > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_job, jobs_args))
    else:
        results = [_run_job(a) for a in jobs_args]
    return sorted(results, key=lambda r: (r.loss, r.restart))
