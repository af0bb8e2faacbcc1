"""Minimize E_{Bern(p)}[(z - 1)^2] = 1 - p from p = 0.5 with each estimator.

    python scripts/toy_bernoulli.py --epochs 200
"""

import argparse

import numpy as np

from pwgf.estimators import ESTIMATORS
from pwgf.harness import TOY_DEFAULTS, ExperimentConfig, parse_seeds, run_toy_bernoulli


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--seeds", default="1..10", type=parse_seeds)
    ap.add_argument("--epochs", type=int, default=100)
    ap.add_argument("--out", default=None)
    args = ap.parse_args()

    cfg = ExperimentConfig(experiment="toy_bernoulli", estimators=ESTIMATORS + ("exact",),
                           seeds=args.seeds, epochs=args.epochs, **TOY_DEFAULTS)
    curve, _ = run_toy_bernoulli(cfg)
    checkpoints = [e for e in (1, 10, 25, 50, 100, 200, 500) if e <= cfg.epochs]
    print("mean objective 1 - p by epoch")
    print(f"{'estimator':<10}" + "".join(f"{e:>10}" for e in checkpoints))
    for name in cfg.estimators:
        vals = [np.mean([r.gen_objective for r in curve.rows if r.estimator == name and r.epoch == e])
                for e in checkpoints]
        print(f"{name:<10}" + "".join(f"{v:>10.2e}" for v in vals))
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(curve.to_csv())


if __name__ == "__main__":
    main()
