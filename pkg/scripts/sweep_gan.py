"""Grid over Poisson GAN settings, reporting mean +- std of final lambda per estimator.

Each setting is a comma-separated list of ExperimentConfig overrides:

    python scripts/sweep_gan.py --seeds 0..39 \\
        "disc_weight_decay=3.0" "disc_weight_decay=4.0,bandwidth=8.0"
"""

import argparse
import time

from pwgf.harness import ExperimentConfig, parse_seeds, run_poisson_gan


def parse_overrides(text):
    out = {}
    for item in filter(None, text.split(",")):
        key, _, raw = item.partition("=")
        default = getattr(ExperimentConfig(), key.strip())
        raw = raw.strip()
        if raw == "None":
            out[key.strip()] = None
        elif isinstance(default, bool):
            out[key.strip()] = raw.lower() in ("1", "true", "yes")
        elif isinstance(default, int):
            out[key.strip()] = int(raw)
        else:
            out[key.strip()] = float(raw)
    return out


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("settings", nargs="+")
    ap.add_argument("--seeds", default="0..29", type=parse_seeds)
    ap.add_argument("--estimators", default="pwgf_mmd,reinforce")
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()

    for setting in args.settings:
        start = time.perf_counter()
        cfg = ExperimentConfig(estimators=tuple(args.estimators.split(",")), seeds=args.seeds,
                               workers=args.workers, **parse_overrides(setting))
        _, stats = run_poisson_gan(cfg)
        summary = " | ".join(f"{s.estimator} {s.mean:.3f}+-{s.std:.3f}" for s in stats)
        print(f"{setting or 'defaults'}: {summary} ({time.perf_counter() - start:.0f}s)", flush=True)


if __name__ == "__main__":
    main()
