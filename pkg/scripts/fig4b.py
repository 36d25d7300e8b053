"""Paired BO vs. random search over several seeds; prints one row per seed.

    python scripts/fig4b.py --preset desk --seeds 0-9
"""

import argparse
import csv
import sys

from risbo.config import parse_config
from risbo.evaluation import experiment_fig4b


def seed_range(text):
    lo, _, hi = text.partition("-")
    return list(range(int(lo), int(hi or lo) + 1))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--preset", default="desk")
    ap.add_argument("--seeds", type=seed_range, default=seed_range("0-9"))
    ap.add_argument("--snr-db", type=float)
    ap.add_argument("--lengthscale", type=float)
    args = ap.parse_args()
    bo = {k: v for k, v in (("snr_db", args.snr_db), ("lengthscale", args.lengthscale)) if v is not None}
    cfg = parse_config(preset=args.preset, overrides={"bo": bo})
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["seed", "initial_ber", "bo_min_ber", "random_min_ber", "bo_not_worse"])
    wins = 0
    for seed in args.seeds:
        b, r = experiment_fig4b(cfg, seed)
        wins += b.min_ber <= r.min_ber
        w.writerow([seed, b.trace[0].ber, b.min_ber, r.min_ber, int(b.min_ber <= r.min_ber)])
        sys.stdout.flush()
    print(f"BO not worse in {wins}/{len(args.seeds)} seeds", file=sys.stderr)


if __name__ == "__main__":
    main()
