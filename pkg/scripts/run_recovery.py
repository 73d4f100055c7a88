"""Recovery sweep: success rate vs restarts and scale factor on the desk generator.

    python3 scripts/run_recovery.py --trials 20 --seed 0 --out results/recovery.csv
"""

import argparse
import csv
import time
from pathlib import Path

from pulse.bench import recovery_experiment
from pulse.generator import init_random_generator
from pulse.objective import ObjectiveConfig
from pulse.search import OptimConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--trials", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--gen-seed", type=int, default=0)
    ap.add_argument("--restarts", type=int, nargs="+", default=[1, 5])
    ap.add_argument("--scales", type=int, nargs="+", default=[2, 4])
    ap.add_argument("--out", type=Path, default=Path("results/recovery.csv"))
    args = ap.parse_args()

    spec = init_random_generator(seed=args.gen_seed)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    with args.out.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["scale", "restarts", "trials", "successes", "rate", "seconds"])
        for scale in args.scales:
            for restarts in args.restarts:
                start = time.perf_counter()
                rep = recovery_experiment(spec, scale, args.trials, OptimConfig(restarts=restarts),
                                          seed=args.seed, obj_config=ObjectiveConfig())
                stats = rep.groups["recovery"]
                row = [scale, restarts, stats.attempts, stats.successes, f"{rep.rate():.4f}",
                       f"{time.perf_counter() - start:.1f}"]
                writer.writerow(row)
                print(*row, sep="\t", flush=True)


if __name__ == "__main__":
    main()
