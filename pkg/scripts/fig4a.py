"""BER vs. SNR for the initial and the BO-optimized RIS configuration.

    python scripts/fig4a.py --preset desk --seed 0 --mode reuse
"""

import argparse
import csv
import sys

from risbo.config import parse_config
from risbo.evaluation import SWEEP_COLUMNS, experiment_fig4a


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--preset", default="desk")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--mode", choices=("reuse", "per_snr"), default="reuse")
    ap.add_argument("--snr-db", type=lambda s: [float(v) for v in s.split(",")])
    args = ap.parse_args()
    over = {"eval": {"snr_db": args.snr_db}} if args.snr_db else {}
    cfg = parse_config(preset=args.preset, overrides=over)
    res = experiment_fig4a(cfg, args.seed, mode=args.mode)
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(SWEEP_COLUMNS)
    for r in res.records:
        w.writerow(r.to_row())
    print(f"initial {res.phi_initial.indices} -> optimized {[p.indices for p in res.phi_optimized][0]}",
          file=sys.stderr)


if __name__ == "__main__":
    main()
