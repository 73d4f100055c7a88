"""Norm concentration of Gaussian samples, and penalty descent vs sphere constraint.

    python3 scripts/soap_bubble.py --d 512 --n 10000
"""

import argparse

import numpy as np

from pulse.sphere import gaussian_norm_stats, norm_penalty_descent


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--d", type=int, nargs="+", default=[1, 2, 16, 128, 512])
    ap.add_argument("--n", type=int, default=10_000)
    ap.add_argument("--steps", type=int, default=100)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    print("d\tmean_norm/sqrt(d)\tstd/sqrt(d)\tfraction_within_10pct")
    for d in args.d:
        s = gaussian_norm_stats(d, args.n, seed=args.seed)
        r = np.sqrt(d)
        print(f"{d}\t{s['mean_norm'] / r:.4f}\t{s['std_norm'] / r:.4f}\t{s['fraction_within_10pct']:.4f}")
    d = max(args.d)
    run = norm_penalty_descent(d, args.steps, 0.1, seed=args.seed)
    dev = np.max(np.abs(run["sphere"] - np.sqrt(d)))
    print(f"penalty descent d={d}: norm {run['penalty'][0]:.3f} -> {run['penalty'][-1]:.2e}")
    print(f"sphere-constrained d={d}: max |norm - sqrt(d)| = {dev:.1e}")


if __name__ == "__main__":
    main()
