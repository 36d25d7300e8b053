"""DeepSIC vs. exhaustive MAP on a fixed two-user QPSK channel, 10 seeds."""

import numpy as np

from risbo import evaluation as ev, modem
from risbo.channel import ChannelRealization, NoiseModel, PhaseConfig, transmit
from risbo.deepsic import TrainingConfig, evaluate_ber, make_dataset, train_sequential
from risbo.modem import Constellation
from risbo.numerics import RngStream, stream

G = np.array([[1.0, 0.45 - 0.2j], [0.3 + 0.25j, 0.9]])


def main():
    c = Constellation.qpsk()
    ch = ChannelRealization(np.zeros((1, 2), complex), np.zeros((2, 1), complex), G, 1.0, 1.0, 10.0)
    phi = PhaseConfig.from_indices([0], 1)
    noise = NoiseModel(ev.calibrate_map_sigma2(G, c, 1e-2, 50_000, RngStream(100, 1)))
    print(f"sigma2 = {noise.sigma2:.4f} ({noise.snr_db:.2f} dB)")
    cfg = TrainingConfig()
    for seed in range(10):
        labels, y, _, _ = make_dataset(ch, phi, noise, c, cfg.n_tr, stream(seed, 4), stream(seed, 1))
        params = train_sequential(labels, y, cfg, stream(seed, 6))
        test = stream(seed, 7)
        res = evaluate_ber(params, ch, phi, noise, 25_000, test, c)
        sym, bits = modem.random_symbols(test.child(0), c, 2, 25_000)
        y_test = transmit(ch, phi, sym, noise, test.child(1))
        map_ber = modem.count_bit_errors(bits, c.symbol_bits(ev.map_detect(G, y_test, c.points)))[2]
        print(f"seed {seed}: DeepSIC {res.ber:.5f}  MAP {map_ber:.5f}  ratio {res.ber / map_ber:.2f}")


if __name__ == "__main__":
    main()
