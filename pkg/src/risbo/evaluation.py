"""Reference detectors and experiment drivers.

``map_detect`` is the exhaustive minimum-distance detector, which equals
MAP for uniform priors and white Gaussian noise; it is the lower envelope
every learned detector is judged against. The sweep and figure drivers
produce plain :class:`SweepRecord` rows for CSV output.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass, replace

import numpy as np
from scipy import stats

from . import gp, modem, neural
from .channel import (
    ChannelRealization,
    NoiseModel,
    PhaseConfig,
    add_noise,
    effective_matrix,
    transmit,
)
from .config import ExperimentConfig
from .deepsic import evaluate_ber, make_dataset, symbols_for_bits, train_sequential
from .jointopt import (
    RunResult,
    alternating_step_receiver,
    channel_for,
    constellation_of,
    initial_phase,
    run_joint,
    run_random_baseline,
)
from .modem import Constellation
from .numerics import Stream, stream

MAX_HYPOTHESES = 4096
DETECTORS = ("deepsic_fixed_ris", "deepsic_opt_ris", "map_oracle", "random_ris")


class OracleBoundError(ValueError):
    pass


@dataclass(frozen=True)
class SweepRecord:
    snr_db: float
    ber: float
    detector: str
    n_bits: int
    seed: int = 0

    def to_row(self) -> list:
        return [repr(float(self.snr_db)), self.detector, repr(float(self.ber)), self.n_bits, self.seed]


SWEEP_COLUMNS = ["snr_db", "detector", "ber", "n_bits", "seed"]


def hypotheses(points: np.ndarray, k: int) -> np.ndarray:
    """All ``M**K`` symbol vectors as columns, in lexicographic index order."""
    m = len(points)
    if m**k > MAX_HYPOTHESES:
        raise OracleBoundError(f"M^K = {m**k} exceeds the exhaustive-search bound {MAX_HYPOTHESES}")
    idx = np.array(list(itertools.product(range(m), repeat=k)), dtype=np.int64)
    return points[idx].T  # (K, M^K)


def map_detect(h: np.ndarray, y: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Minimum-distance decisions for every column of ``y`` (``N x T``).

    Ties resolve to the lexicographically smallest hypothesis.
    """
    h = np.asarray(h)
    y = np.asarray(y)
    vector = y.ndim == 1
    if vector:
        y = y[:, None]
    cand = hypotheses(np.asarray(points), h.shape[1])
    hs = h @ cand  # (N, H)
    # ||y - Hs||^2 = ||y||^2 - 2 Re(y^H Hs) + ||Hs||^2 ; the first term is common
    score = np.sum(np.abs(hs) ** 2, axis=0)[None, :] - 2.0 * np.real(y.conj().T @ hs)
    best = np.argmin(score, axis=1)
    out = cand[:, best]
    return out[:, 0] if vector else out


def map_oracle_detect(ch: ChannelRealization, phi: PhaseConfig, sigma2: float, y: np.ndarray,
                      c: Constellation | None = None) -> np.ndarray:
    """MAP symbols for received vectors through ``(ch, phi)``; ``sigma2`` does not change the rule."""
    c = c or Constellation.qpsk()
    return map_detect(effective_matrix(ch, phi), y, c.points)


def map_ber(h: np.ndarray, c: Constellation, noise: NoiseModel, n_symbols: int, rng) -> tuple[float, int]:
    """Monte Carlo BER of the MAP detector over a complex channel matrix ``h``."""
    symbols, bits = modem.random_symbols(rng.child(0), c, h.shape[1], n_symbols)
    y = add_noise(h @ symbols, noise, rng.child(1))
    decided = map_detect(h, y, c.points)
    errors, total, ber = modem.count_bit_errors(bits, c.symbol_bits(decided))
    return ber, total


def _test_block(cfg, seed, key, c):
    n_sym = symbols_for_bits(cfg.eval.n_test_bits, cfg.dims.k, c)
    return n_sym, stream(seed, Stream.TEST, key)


def fixed_ris_ber(cfg: ExperimentConfig, ch: ChannelRealization, phi: PhaseConfig,
                  noise: NoiseModel, seed: int, key: int) -> tuple[float, int]:
    """Train on the first pilot block at ``noise`` and test on fresh data.

    Seeds depend only on ``(seed, key)``, not on ``phi``, so two
    configurations are compared on identical pilots, noise and test data.
    """
    c = constellation_of(cfg)
    labels, y, _, _ = make_dataset(ch, phi, noise, c, cfg.training.n_tr,
                                   stream(seed, Stream.PILOTS, 1),
                                   stream(seed, Stream.NOISE, 1, 1000 + key))
    params = train_sequential(labels, y, cfg.training, stream(seed, Stream.TRAINING, 1, 1000 + key))
    n_sym, test_rng = _test_block(cfg, seed, key, c)
    res = evaluate_ber(params, ch, phi, noise, n_sym, test_rng, c)
    return res.ber, res.n_bits


def oracle_ber(cfg: ExperimentConfig, ch: ChannelRealization, phi: PhaseConfig,
               noise: NoiseModel, seed: int, key: int) -> tuple[float, int]:
    """MAP BER on exactly the test block used by :func:`fixed_ris_ber`."""
    c = constellation_of(cfg)
    n_sym, test_rng = _test_block(cfg, seed, key, c)
    symbols, bits = modem.random_symbols(test_rng.child(0), c, ch.k, n_sym)
    y = transmit(ch, phi, symbols, noise, test_rng.child(1))
    decided = map_detect(effective_matrix(ch, phi), y, c.points)
    _, total, ber = modem.count_bit_errors(bits, c.symbol_bits(decided))
    return ber, total


def map_within_bound(cfg: ExperimentConfig) -> bool:
    return constellation_of(cfg).m ** cfg.dims.k <= MAX_HYPOTHESES


def snr_sweep(cfg: ExperimentConfig, snr_points=None, seed: int | None = None,
              phi: PhaseConfig | None = None, ch: ChannelRealization | None = None) -> list[SweepRecord]:
    """Fixed-RIS DeepSIC BER (and MAP BER when tractable) per SNR point."""
    snr_points = list(cfg.eval.snr_db if snr_points is None else snr_points)
    if not snr_points:
        raise ValueError("snr_points must be non-empty")
    seed = cfg.seed if seed is None else seed
    ch = ch or channel_for(cfg, seed)
    phi = phi or initial_phase(cfg, seed)
    records = []
    for i, snr in enumerate(snr_points):
        noise = NoiseModel.from_snr_db(snr)
        ber, n = fixed_ris_ber(cfg, ch, phi, noise, seed, i)
        records.append(SweepRecord(snr, ber, "deepsic_fixed_ris", n, seed))
        if cfg.eval.map_oracle and map_within_bound(cfg):
            ber, n = oracle_ber(cfg, ch, phi, noise, seed, i)
            records.append(SweepRecord(snr, ber, "map_oracle", n, seed))
    return records


@dataclass
class Fig4aResult:
    records: list[SweepRecord]
    runs: list[RunResult]
    phi_initial: PhaseConfig
    phi_optimized: list[PhaseConfig]

    def curve(self, detector: str) -> tuple[np.ndarray, np.ndarray]:
        rows = [r for r in self.records if r.detector == detector]
        return np.array([r.snr_db for r in rows]), np.array([r.ber for r in rows])


def experiment_fig4a(cfg: ExperimentConfig, seed: int | None = None, mode: str | None = None,
                     joint: RunResult | None = None) -> Fig4aResult:
    """BER versus SNR for the initial and the optimized configuration.

    ``mode="reuse"`` runs the joint design once at ``cfg.bo.snr_db`` (or
    takes ``joint``) and reuses its configuration across the sweep;
    ``mode="per_snr"`` reruns it at every SNR point. With
    ``cfg.eval.optimize_ris`` off the optimized configuration is the
    initial one, so the two curves coincide.
    """
    seed = cfg.seed if seed is None else seed
    mode = mode or cfg.eval.fig4a_mode
    ch = channel_for(cfg, seed)
    phi1 = initial_phase(cfg, seed)
    snrs = list(cfg.eval.snr_db)
    runs: list[RunResult] = []
    if not cfg.eval.optimize_ris:
        optimized = [phi1] * len(snrs)
    elif mode == "reuse":
        run = joint or run_joint(cfg, seed, ch)
        runs.append(run)
        optimized = [run.best_phi] * len(snrs)
    elif mode == "per_snr":
        optimized = []
        for snr in snrs:
            run = run_joint(replace(cfg, bo=replace(cfg.bo, snr_db=snr)), seed, ch)
            runs.append(run)
            optimized.append(run.best_phi)
    else:
        raise ValueError(f"unknown fig4a mode {mode!r}")
    records = []
    for i, (snr, phi_opt) in enumerate(zip(snrs, optimized)):
        noise = NoiseModel.from_snr_db(snr)
        ber1, n = fixed_ris_ber(cfg, ch, phi1, noise, seed, i)
        records.append(SweepRecord(snr, ber1, "deepsic_fixed_ris", n, seed))
        ber2, n = (ber1, n) if phi_opt == phi1 else fixed_ris_ber(cfg, ch, phi_opt, noise, seed, i)
        records.append(SweepRecord(snr, ber2, "deepsic_opt_ris", n, seed))
    return Fig4aResult(records, runs, phi1, optimized)


def experiment_fig4b(cfg: ExperimentConfig, seed: int | None = None) -> tuple[RunResult, RunResult]:
    """Paired BO and random-search runs at the fixed SNR ``cfg.bo.snr_db``."""
    seed = cfg.seed if seed is None else seed
    ch = channel_for(cfg, seed)
    return run_joint(cfg, seed, ch), run_random_baseline(cfg, seed, ch)


def exhaustive_grid_oracle(cfg: ExperimentConfig, seed: int | None = None,
                           ch: ChannelRealization | None = None,
                           t: int = 1) -> list[tuple[PhaseConfig, float]]:
    """Train and validate at every grid configuration with the seeds of iteration ``t``."""
    seed = cfg.seed if seed is None else seed
    ch = ch or channel_for(cfg, seed)
    out = []
    for idx in gp.grid_indices(cfg.dims.p, cfg.dims.b):
        phi = PhaseConfig.from_indices(idx, cfg.dims.b)
        _, res = alternating_step_receiver(cfg, ch, phi, seed, t)
        out.append((phi, res.ber))
    return out


def calibrate_map_sigma2(h: np.ndarray, c: Constellation, target_ber: float, n_symbols: int,
                         rng, lo_db: float = -20.0, hi_db: float = 40.0, iters: int = 40) -> float:
    """Noise variance at which the MAP BER over ``h`` is ``target_ber``.

    Bisection on SNR with common random numbers, so the estimated BER is a
    monotone step function of the SNR.
    """
    symbols, bits = modem.random_symbols(rng.child(0), c, h.shape[1], n_symbols)
    gen = rng.child(1).generator()
    w = (gen.standard_normal((h.shape[0], n_symbols))
         + 1j * gen.standard_normal((h.shape[0], n_symbols))) / math.sqrt(2)
    clean = h @ symbols

    def ber_at(snr_db):
        y = clean + math.sqrt(10 ** (-snr_db / 10)) * w
        return modem.count_bit_errors(bits, c.symbol_bits(map_detect(h, y, c.points)))[2]

    for _ in range(iters):
        mid = 0.5 * (lo_db + hi_db)
        if ber_at(mid) > target_ber:
            lo_db = mid
        else:
            hi_db = mid
    return 10 ** (-0.5 * (lo_db + hi_db) / 10)


def spearman(x, y) -> float:
    return float(stats.spearmanr(x, y).statistic)


def binomial_se(ber: float, n_bits: int) -> float:
    return math.sqrt(max(ber * (1 - ber), 1.0 / n_bits) / n_bits)


# ---------------------------------------------------------------------------
# quick oracle suite used by the ``oracle-check`` subcommand


def _check_gp(rng) -> tuple[bool, str]:
    worst = 0.0
    for _ in range(10):
        data = gp.GpDataset()
        for row in rng.choice(4**4, size=5, replace=False):
            idx = np.array(np.unravel_index(row, (4,) * 4))
            data.add(PhaseConfig.from_indices(idx, 2), float(rng.normal()))
        model = gp.fit(data, 1.0, 1e-10, 1e-6)
        x = data.inputs()
        y = np.asarray(data.observations)
        mu, sd = y.mean(), y.std()
        kinv = np.linalg.inv(gp.kernel_matrix(x, x) + (1e-6 + model.jitter) * np.eye(5))
        q = gp.angles_embedding(rng.uniform(0, 2 * np.pi, size=(7, 4)))
        ks = gp.kernel_matrix(x, q)
        mean = (ks.T @ kinv @ ((y - mu) / sd)) * sd + mu
        var = (1.0 - np.einsum("ij,ik,kj->j", ks, kinv, ks)) * sd**2
        m2, v2 = model.predict(q)
        worst = max(worst, np.max(np.abs(mean - m2)), np.max(np.abs(var - v2)))
    return worst < 1e-8, f"max |cholesky - explicit inverse| = {worst:.2e}"


def _check_ei(rng) -> tuple[bool, str]:
    exact = float(gp.ei_from_moments(0.0, 1.0, 0.0))
    ok = abs(exact - 1 / math.sqrt(2 * math.pi)) < 1e-10
    z = rng.standard_normal(200_000)
    bad = 0
    for _ in range(5):
        delta, sigma = rng.uniform(-2, 2), rng.uniform(0.1, 2)
        samples = np.maximum(delta + sigma * z, 0.0)
        se = samples.std() / math.sqrt(len(z))
        bad += abs(samples.mean() - float(gp.ei_from_moments(delta, sigma, 0.0))) > 3 * se
    return ok and bad == 0, f"EI(0,1) = {exact:.12f}, Monte Carlo misses = {bad}/5"


def _check_gradients(rng) -> tuple[bool, str]:
    params = neural.init_mlp(rng, 19, 2)
    x = rng.standard_normal((16, 19))
    labels = rng.integers(0, 2, 16)
    grads, _ = neural.backward(params, x, labels)
    flat, g = neural.flatten(params), neural.flatten(grads)
    h = 1e-5
    fails = 0
    coords = rng.choice(flat.size, 50, replace=False)
    for i in coords:
        vals = []
        for sgn in (1, -1):
            f = flat.copy()
            f[i] += sgn * h
            p = _unflatten(f, params)
            vals.append(float(neural.mean_cross_entropy(p, x, labels)))
        num = (vals[0] - vals[1]) / (2 * h)
        fails += abs(num - g[i]) / max(abs(num), abs(g[i]), 1e-8) >= 1e-4
    return fails <= 0, f"finite-difference mismatches = {fails}/{len(coords)}"


def _unflatten(flat, like: neural.MlpParams) -> neural.MlpParams:
    out, off = [], 0
    for a in like.arrays():
        out.append(flat[off:off + a.size].reshape(a.shape))
        off += a.size
    return neural.MlpParams.from_arrays(out)


def _check_map(rng) -> tuple[bool, str]:
    c = Constellation.bpsk()
    h = rng.standard_normal((3, 2)) + 1j * rng.standard_normal((3, 2))
    s = c.points[rng.integers(0, 2, size=(2, 50))]
    y = h @ s + 0.7 * (rng.standard_normal((3, 50)) + 1j * rng.standard_normal((3, 50)))
    fast = map_detect(h, y, c.points)
    mismatches = 0
    for t in range(y.shape[1]):
        best, arg = math.inf, None
        for a in c.points:
            for b in c.points:
                d = float(np.sum(np.abs(y[:, t] - h @ np.array([a, b])) ** 2))
                if d < best:
                    best, arg = d, (a, b)
        mismatches += not np.allclose(fast[:, t], arg)
    return mismatches == 0, f"disagreements with nested-loop search = {mismatches}/50"


def run_oracle_checks(seed: int = 0) -> list[tuple[str, bool, str]]:
    rng = np.random.default_rng(seed)
    checks = [
        ("gp_posterior_vs_explicit_inverse", _check_gp),
        ("expected_improvement_closed_form", _check_ei),
        ("backprop_vs_finite_differences", _check_gradients),
        ("map_vs_nested_loop", _check_map),
    ]
    return [(name, *fn(rng)) for name, fn in checks]


def records_as_dicts(records: list[SweepRecord]) -> list[dict]:
    return [asdict(r) for r in records]
