"""Median first-iteration BER of the desk preset over seeds, per SNR.

Used to pick the fixed BO SNR (initial BER around 5e-2).

    python scripts/calibrate_snr.py --snr-db -9,-6,-3
"""

import argparse

import numpy as np

from risbo.config import parse_config
from risbo.jointopt import alternating_step_receiver, channel_for, initial_phase
from risbo.channel import NoiseModel


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--preset", default="desk")
    ap.add_argument("--snr-db", type=lambda s: [float(v) for v in s.split(",")], default=[-9.0, -6.0, -3.0])
    ap.add_argument("--seeds", type=int, default=10)
    args = ap.parse_args()
    cfg = parse_config(preset=args.preset)
    for snr in args.snr_db:
        bers = []
        for seed in range(args.seeds):
            _, res = alternating_step_receiver(cfg, channel_for(cfg, seed), initial_phase(cfg, seed), seed, 1,
                                               NoiseModel.from_snr_db(snr))
            bers.append(res.ber)
        print(f"{snr:+.1f} dB: median initial BER {np.median(bers):.4f} "
              f"(range {min(bers):.4f} .. {max(bers):.4f})")


if __name__ == "__main__":
    main()
