"""Experiment drivers: recovery, robustness to degraded inputs, group-wise success rates.

Success is the same limited notion throughout: an item succeeds if any of
its runs finds an image whose downscaling loss is within ``eps``. It says
nothing about how diverse or faithful the found images are.
"""

from __future__ import annotations

import io
import csv
import zlib
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .degrade import degrade
from .formats import FormatError, read_image
from .generator import GeneratorSpec, initial_state, synthesize
from .objective import ObjectiveConfig
from .resample import build_downscaler
from .search import OptimConfig, multi_restart

IMAGE_SUFFIXES = (".pgm", ".ppm")
CSV_HEADER = ("group", "attempts", "successes", "rate")


@dataclass
class GroupStats:
    attempts: int = 0
    successes: int = 0
    runs: int = 0

    @property
    def rate(self) -> float | None:
        return self.successes / self.attempts if self.attempts else None


@dataclass
class BenchReport:
    groups: dict[str, GroupStats]
    config: dict
    items: list[dict] = field(default_factory=list)
    skipped: list[tuple[str, str]] = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    def rate(self, group: str | None = None) -> float | None:
        if group is None:
            (group,) = self.groups
        return self.groups[group].rate

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for name, g in self.groups.items():
            w.writerow([name, g.attempts, g.successes, _fmt_rate(g.rate)])
        return buf.getvalue()

    def to_text(self) -> str:
        width = max([len("group")] + [len(n) for n in self.groups])
        lines = [f"{'group':<{width}}  attempts  runs  successes  success rate"]
        for name, g in self.groups.items():
            lines.append(f"{name:<{width}}  {g.attempts:>8}  {g.runs:>4}  {g.successes:>9}  "
                         f"{_fmt_rate(g.rate):>12}")
        for path, reason in self.skipped:
            lines.append(f"skipped {path}: {reason}")
        return "\n".join(lines)


def _fmt_rate(rate):
    return "n/a" if rate is None else f"{rate:.4f}"


def _trial_seed(*entropy) -> int:
    return int(np.random.SeedSequence(list(entropy)).generate_state(1)[0])


def _recovery_items(spec, scale_factor, trials, opt_config, obj_config, seed, kernel,
                    jobs, degradation=None, param=None):
    resampler = build_downscaler(kernel, spec.resolution, scale_factor)
    stats = GroupStats()
    items = []
    for t in range(trials):
        target = initial_state(spec, [seed, t, 0])
        clean = resampler.apply(synthesize(spec, target))
        observed = clean if degradation is None else degrade(clean, degradation, param, _trial_seed(seed, t, 2))
        runs = multi_restart(observed, spec, resampler, obj_config,
                             replace(opt_config, seed=_trial_seed(seed, t, 1) % 2**31), jobs=jobs)
        best = runs[0]
        ok = any(r.converged for r in runs)
        stats.attempts += 1
        stats.runs += len(runs)
        stats.successes += ok
        item = {"trial": t, "converged": ok, "best_loss": best.loss,
                "losses": [r.loss for r in sorted(runs, key=lambda r: r.restart)]}
        if degradation is not None:
            item["residual_clean"] = float(np.linalg.norm(resampler.apply(best.image) - clean))
            item["residual_noisy"] = float(np.linalg.norm(observed - clean))
        items.append(item)
    return stats, items


def recovery_experiment(spec: GeneratorSpec, scale_factor: int, trials: int,
                        opt_config: OptimConfig = OptimConfig(restarts=5), seed: int = 0,
                        obj_config: ObjectiveConfig = ObjectiveConfig(), kernel: str = "bicubic",
                        jobs: int = 1) -> BenchReport:
    """Synthesize targets from random latents, downscale, and search for them again."""
    stats, items = _recovery_items(spec, scale_factor, trials, opt_config, obj_config,
                                   seed, kernel, jobs)
    config = {"experiment": "recovery", "scale": scale_factor, "trials": trials, "seed": seed,
              "kernel": kernel, "opt": opt_config, "objective": obj_config}
    return BenchReport({"recovery": stats}, config, items)


def robustness_experiment(spec: GeneratorSpec, degradation: str, param, trials: int,
                          seed: int = 0, scale_factor: int = 4,
                          opt_config: OptimConfig = OptimConfig(restarts=5),
                          obj_config: ObjectiveConfig = ObjectiveConfig(),
                          kernel: str = "bicubic", jobs: int = 1) -> BenchReport:
    """Recovery with a degraded LR input.

    Per trial, compares the distance from the found image's downscaling to the
    clean LR image against the distance of the degraded input itself.
    """
    stats, items = _recovery_items(spec, scale_factor, trials, opt_config, obj_config,
                                   seed, kernel, jobs, degradation, param)
    clean = [it["residual_clean"] for it in items]
    noisy = [it["residual_noisy"] for it in items]
    closer = [c < n for c, n in zip(clean, noisy)]
    extra = {
        "residual_clean": clean,
        "residual_noisy": noisy,
        "mean_residual_clean": float(np.mean(clean)) if items else float("nan"),
        "mean_residual_noisy": float(np.mean(noisy)) if items else float("nan"),
        "denoised_fraction": float(np.mean(closer)) if items else float("nan"),
    }
    config = {"experiment": "robustness", "degradation": degradation, "param": param,
              "scale": scale_factor, "trials": trials, "seed": seed, "kernel": kernel,
              "opt": opt_config, "objective": obj_config}
    return BenchReport({f"{degradation}:{param}": stats}, config, items, extra=extra)


def _check_item(image, spec: GeneratorSpec) -> int:
    """Scale factor implied by an LR image, or raise ValueError."""
    h, w = image.shape[:2]
    channels = 1 if image.ndim == 2 else image.shape[2]
    if channels != spec.out_channels:
        raise ValueError(f"{channels} channel(s), generator makes {spec.out_channels}")
    if h != w:
        raise ValueError(f"image is {w}x{h}; must be square")
    if spec.resolution % h or spec.resolution // h < 2:
        raise ValueError(f"size {h} does not divide the generator size {spec.resolution} "
                         f"with a factor >= 2")
    return spec.resolution // h


def success_rate(dataset_root, spec: GeneratorSpec, runs_per_image: int = 5,
                 opt_config: OptimConfig = OptimConfig(),
                 obj_config: ObjectiveConfig = ObjectiveConfig(),
                 kernel: str = "bicubic", jobs: int = 1) -> BenchReport:
    """Per-group success rates over ``dataset_root/<group>/*.pgm|ppm``.

    Unreadable or mis-sized images are listed in ``report.skipped``. A group
    with no usable images reports a rate of ``n/a``.
    """
    root = Path(dataset_root)
    if not root.is_dir():
        raise FileNotFoundError(f"dataset root {root} is not a directory")
    groups: dict[str, GroupStats] = {}
    items, skipped = [], []
    resamplers = {}
    for group_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        stats = groups.setdefault(group_dir.name, GroupStats())
        for path in sorted(p for p in group_dir.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES):
            rel = f"{group_dir.name}/{path.name}"
            try:
                lr = read_image(path)
                factor = _check_item(lr, spec)
            except (FormatError, ValueError, OSError) as exc:
                skipped.append((rel, str(exc)))
                continue
            if factor not in resamplers:
                resamplers[factor] = build_downscaler(kernel, spec.resolution, factor)
            seed = _trial_seed(opt_config.seed, zlib.crc32(rel.encode("utf-8"))) % 2**31
            runs = multi_restart(lr, spec, resamplers[factor], obj_config,
                                 replace(opt_config, seed=seed), n=runs_per_image, jobs=jobs)
            ok = any(r.converged for r in runs)
            stats.attempts += 1
            stats.runs += len(runs)
            stats.successes += ok
            items.append({"group": group_dir.name, "item": path.name, "converged": ok,
                          "best_loss": runs[0].loss})
    config = {"experiment": "success-rate", "root": str(root), "runs_per_image": runs_per_image,
              "kernel": kernel, "opt": opt_config, "objective": obj_config}
    return BenchReport(groups, config, items, skipped)
