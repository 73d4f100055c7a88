"""Command-line entry point: ``pulse <command> ...``.

Exit codes: 0 success, 1 error, 2 search finished without an image within eps.
"""

from __future__ import annotations

import argparse
import csv
import math
import os
import secrets
import sys
from pathlib import Path

from . import bench
from .degrade import degrade
from .formats import FormatError, read_image, read_weights, write_image, write_weights
from .generator import DESK, GeneratorError, init_random_generator
from .metrics import mse, psnr, ssim
from .objective import ObjectiveConfig
from .resample import build_downscaler
from .search import OptimConfig, multi_restart
from .sphere import gaussian_norm_stats

EXIT_OK, EXIT_ERROR, EXIT_NOT_FOUND = 0, 1, 2


class CliError(Exception):
    pass


def resolve_seed(value) -> int:
    if value is not None:
        return int(value)
    env = os.environ.get("PULSE_SEED")
    if env:
        return int(env)
    seed = secrets.randbelow(2**31)
    print(f"seed={seed}", file=sys.stderr)
    return seed


def _search_args(p: argparse.ArgumentParser, restarts: int = 1) -> None:
    p.add_argument("--steps", type=int, default=100)
    p.add_argument("--lr", type=float, default=0.4)
    p.add_argument("--eps", type=float, default=1e-3)
    p.add_argument("--restarts", type=int, default=restarts)
    p.add_argument("--geocross", type=float, default=ObjectiveConfig.geocross)
    p.add_argument("--cross", choices=["geodesic", "euclidean"], default="geodesic")
    p.add_argument("--p", type=int, choices=[1, 2], default=2)
    p.add_argument("--trainable-noise", type=int, default=None)
    p.add_argument("--noise-lr", type=float, default=OptimConfig.noise_lr)
    p.add_argument("--optimizer", choices=["adam", "sgd", "momentum"], default="adam")
    p.add_argument("--kernel", choices=["bicubic", "box"], default="bicubic")
    p.add_argument("--retraction", choices=["tangent", "renorm"], default="tangent")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--jobs", type=int, default=1)


def _configs(args, seed: int) -> tuple[ObjectiveConfig, OptimConfig]:
    obj = ObjectiveConfig(p=args.p, geocross=args.geocross, variant=args.cross, eps=args.eps)
    opt = OptimConfig(
        steps=args.steps, lr=args.lr, restarts=args.restarts, seed=seed,
        retraction="renormalize" if args.retraction == "renorm" else "tangent",
        trainable_noise_count=args.trainable_noise, noise_lr=args.noise_lr,
        optimizer=args.optimizer,
    )
    return obj, opt


def _load_problem(args, scale: int | None = None):
    spec = read_weights(args.weights)
    lr = read_image(args.input)
    h, w = lr.shape[:2]
    if h != w:
        raise CliError(f"input must be square, got {w}x{h}")
    if scale is None:
        if spec.resolution % h:
            raise CliError(f"input size {h} does not divide generator size {spec.resolution}")
        scale = spec.resolution // h
    if h * scale != spec.resolution:
        raise CliError(f"input {h}x{h} at scale {scale} gives {h * scale}, "
                       f"but the generator makes {spec.resolution}x{spec.resolution}")
    channels = 1 if lr.ndim == 2 else lr.shape[2]
    if channels != spec.out_channels:
        raise CliError(f"input has {channels} channel(s), generator makes {spec.out_channels}")
    return spec, lr, build_downscaler(args.kernel, spec.resolution, scale)


def cmd_upscale(args) -> int:
    seed = resolve_seed(args.seed)
    obj, opt = _configs(args, seed)
    print(f"steps={opt.steps} lr={opt.lr} eps={obj.eps:g} restarts={opt.restarts} seed={seed}")
    spec, lr, resampler = _load_problem(args, args.scale)
    best = multi_restart(lr, spec, resampler, obj, opt, jobs=args.jobs)[0]
    write_image(args.output, best.image)
    marker = Path(str(args.output) + ".unconverged")
    if args.save_trajectory:
        with open(args.save_trajectory, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["step", "loss"])
            w.writerows((i, repr(float(v))) for i, v in enumerate(best.trajectory))
    print(f"loss={best.loss:.6g} converged={best.converged} restart={best.restart}")
    if best.converged:
        marker.unlink(missing_ok=True)
        return EXIT_OK
    marker.write_text(f"best downscaling loss {best.loss!r} > eps {obj.eps!r}\n")
    print("no image found within eps", file=sys.stderr)
    return EXIT_NOT_FOUND


def cmd_sample(args) -> int:
    seed = resolve_seed(args.seed)
    args.restarts = args.n
    obj, opt = _configs(args, seed)
    spec, lr, resampler = _load_problem(args)
    runs = multi_restart(lr, spec, resampler, obj, opt, mode=args.mode, jobs=args.jobs)
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    suffix = ".pgm" if spec.out_channels == 1 else ".ppm"
    written = 0
    for r in sorted(runs, key=lambda r: r.restart):
        if not r.converged:
            print(f"run {r.restart}: not converged (loss {r.loss:.6g})", file=sys.stderr)
            continue
        write_image(outdir / f"sample_{r.restart:03d}{suffix}", r.image)
        written += 1
    print(f"wrote {written} of {len(runs)} candidates to {outdir}")
    return EXIT_OK if written else EXIT_NOT_FOUND


def cmd_degrade(args) -> int:
    seed = resolve_seed(args.seed)
    write_image(args.output, degrade(read_image(args.input), args.op, args.param, seed))
    return EXIT_OK


def cmd_metrics(args) -> int:
    a, b = read_image(args.a), read_image(args.b)
    p = psnr(a, b)
    print(f"mse={mse(a, b):.8g}")
    print(f"psnr={'inf' if math.isinf(p) else f'{p:.4f}'}")
    print(f"ssim={ssim(a, b):.6f}")
    return EXIT_OK


def cmd_gen_init(args) -> int:
    widths = tuple(int(w) for w in args.widths.split(",")) if args.widths else None
    spec = init_random_generator(args.d, args.k, args.r0, widths, seed=resolve_seed(args.seed),
                                 out_channels=args.channels)
    write_weights(args.output, spec)
    print(f"d={spec.d} k={spec.k} r0={spec.r0} widths={','.join(map(str, spec.widths))} "
          f"resolution={spec.resolution}")
    return EXIT_OK


def cmd_soapbubble(args) -> int:
    stats = gaussian_norm_stats(args.d, args.n, resolve_seed(args.seed))
    print(f"d={args.d} n={args.n} sqrt_d={math.sqrt(args.d):.6f}")
    for key, value in stats.items():
        print(f"{key}={value:.6f}")
    return EXIT_OK


def _bench_spec(args):
    if args.weights:
        return read_weights(args.weights)
    return init_random_generator(seed=args.gen_seed)


def _emit_report(report, args) -> None:
    text = report.to_csv()
    if args.csv:
        Path(args.csv).write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    print(report.to_text(), file=sys.stderr)


def cmd_bench(args) -> int:
    seed = resolve_seed(args.seed)
    obj, opt = _configs(args, seed)
    spec = _bench_spec(args)
    if args.bench == "recover":
        report = bench.recovery_experiment(spec, args.scale, args.trials, opt, seed, obj,
                                           args.kernel, args.jobs)
    elif args.bench == "robust":
        report = bench.robustness_experiment(spec, args.op, args.param, args.trials, seed,
                                             args.scale, opt, obj, args.kernel, args.jobs)
        ex = report.extra
        print(f"mean_residual_clean={ex['mean_residual_clean']:.6g} "
              f"mean_residual_noisy={ex['mean_residual_noisy']:.6g} "
              f"denoised_fraction={ex['denoised_fraction']:.4f}", file=sys.stderr)
    else:
        report = bench.success_rate(args.root, spec, args.runs, opt, obj, args.kernel, args.jobs)
    _emit_report(report, args)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pulse", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("upscale", help="super-resolve one LR image")
    p.add_argument("--input", required=True)
    p.add_argument("--weights", required=True)
    p.add_argument("--scale", type=int, required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--save-trajectory")
    _search_args(p)
    p.set_defaults(func=cmd_upscale)

    p = sub.add_parser("sample", help="several candidate SR images for one LR image")
    p.add_argument("--input", required=True)
    p.add_argument("--weights", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--mode", choices=["restart", "noise"], default="restart")
    p.add_argument("--outdir", required=True)
    _search_args(p)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("degrade", help="apply a noise or blur degradation")
    p.add_argument("--input", required=True)
    p.add_argument("--op", choices=["gaussian", "blur", "saltpepper"], required=True)
    p.add_argument("--param", type=float, required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_degrade)

    p = sub.add_parser("metrics", help="MSE, PSNR and SSIM between two images")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("gen-init", help="write a seeded random generator")
    p.add_argument("--d", type=int, default=DESK["d"])
    p.add_argument("--k", type=int, default=DESK["k"])
    p.add_argument("--r0", type=int, default=DESK["r0"])
    p.add_argument("--widths", help="comma-separated channel widths, one per layer")
    p.add_argument("--channels", type=int, choices=[1, 3], default=1)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_gen_init)

    p = sub.add_parser("soapbubble", help="norm concentration of Gaussian samples")
    p.add_argument("--d", type=int, default=512)
    p.add_argument("--n", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_soapbubble)

    p = sub.add_parser("bench", help="recovery, robustness and success-rate experiments")
    bsub = p.add_subparsers(dest="bench", required=True)
    for name in ("recover", "robust", "success-rate"):
        b = bsub.add_parser(name)
        b.add_argument("--weights", help="PLSW file; default is the seeded desk generator")
        b.add_argument("--gen-seed", type=int, default=0)
        b.add_argument("--csv", help="also write the CSV report here")
        if name == "success-rate":
            b.add_argument("--root", required=True)
            b.add_argument("--runs", type=int, default=5)
            _search_args(b)
        else:
            b.add_argument("--scale", type=int, default=4)
            b.add_argument("--trials", type=int, default=20)
            _search_args(b, restarts=5)
        if name == "robust":
            b.add_argument("--op", choices=["gaussian", "blur", "saltpepper"], required=True)
            b.add_argument("--param", type=float, required=True)
        b.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (CliError, FormatError, GeneratorError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
