"""Alternating receiver training and RIS configuration search.

Each iteration transmits a fresh pilot block through the current phase
configuration, trains a DeepSIC receiver on it, measures the validation
BER, and asks the acquisition strategy for the next configuration. The
channel realization is drawn once per run and held fixed.

Random substreams are keyed by the master seed and the iteration index,
never by the strategy, so a BO run and a random-search run with the same
seed see identical channels, pilots, noise, training seeds and validation
data at every iteration, and share the initial configuration.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import gp
from .channel import ChannelRealization, NoiseModel, PhaseConfig, draw_channel, random_phase_config
from .config import ExperimentConfig
from .deepsic import (
    BerResult,
    ReceiverParams,
    evaluate_ber,
    make_dataset,
    symbols_for_bits,
    train_sequential,
)
from .modem import Constellation
from .numerics import Stream, stream

FINAL_KEY = 0  # iteration key reserved for the confirmation retrain


class NonFiniteBerError(RuntimeError):
    pass


@dataclass
class TraceEntry:
    t: int
    phi: PhaseConfig
    ber: float
    ser: float
    n_bits: int
    train_loss: float
    duration_s: float
    streams: dict = field(default_factory=dict)

    def to_json(self, timing: bool = False) -> dict:
        doc = {
            "t": self.t,
            "phase_indices": list(self.phi.indices),
            "ber": self.ber,
            "ser": self.ser,
            "n_bits": self.n_bits,
            "train_loss": self.train_loss,
            "streams": self.streams,
        }
        if timing:
            doc["duration_s"] = self.duration_s
        return doc


@dataclass
class RunResult:
    strategy: str
    seed: int
    trace: list[TraceEntry]
    best_index: int
    best_phi: PhaseConfig
    receiver: ReceiverParams
    confirmation: BerResult
    dataset: gp.GpDataset
    pilot_transmissions: int

    @property
    def bers(self) -> np.ndarray:
        return np.array([e.ber for e in self.trace])

    @property
    def running_min(self) -> np.ndarray:
        return np.minimum.accumulate(self.bers)

    @property
    def min_ber(self) -> float:
        return float(self.bers.min())

    @property
    def best_entry(self) -> TraceEntry:
        return self.trace[self.best_index]

    def to_json(self, timing: bool = False) -> dict:
        return {
            "strategy": self.strategy,
            "seed": self.seed,
            "best_iteration": self.best_entry.t,
            "best_phase_indices": list(self.best_phi.indices),
            "best_trace_ber": self.best_entry.ber,
            "confirmation_ber": self.confirmation.ber,
            "confirmation_n_bits": self.confirmation.n_bits,
            "pilot_transmissions": self.pilot_transmissions,
            "trace": [e.to_json(timing) for e in self.trace],
        }

    def trace_csv(self) -> str:
        p = self.best_phi.p
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iter", "ber", "running_min_ber", "ser"] + [f"phase_angle_{i + 1}" for i in range(p)])
        for e, rmin in zip(self.trace, self.running_min):
            w.writerow([e.t, repr(e.ber), repr(float(rmin)), repr(e.ser)]
                       + [repr(float(a)) for a in e.phi.angles])
        return buf.getvalue()


def constellation_of(cfg: ExperimentConfig) -> Constellation:
    return Constellation.of(cfg.modulation)


def channel_for(cfg: ExperimentConfig, seed: int) -> ChannelRealization:
    d, c = cfg.dims, cfg.channel
    return draw_channel(stream(seed, Stream.CHANNEL), d.n, d.k, d.p, c.kappa, c.beta, c.gamma)


def initial_phase(cfg: ExperimentConfig, seed: int) -> PhaseConfig:
    return random_phase_config(stream(seed, Stream.INIT), cfg.dims.p, cfg.dims.b)


def _stream_ids(seed: int, t: int) -> dict:
    return {
        "seed": seed,
        "pilots": [int(Stream.PILOTS), t],
        "noise": [int(Stream.NOISE), t],
        "training": [int(Stream.TRAINING), t],
        "validation": [int(Stream.VALIDATION)],
    }


def train_receiver(cfg: ExperimentConfig, ch: ChannelRealization, phi: PhaseConfig,
                   noise: NoiseModel, seed: int, pilot_key: int, noise_key: int,
                   train_key: int) -> ReceiverParams:
    c = constellation_of(cfg)
    labels, y, _, _ = make_dataset(ch, phi, noise, c, cfg.training.n_tr,
                                   stream(seed, Stream.PILOTS, pilot_key),
                                   stream(seed, Stream.NOISE, noise_key))
    return train_sequential(labels, y, cfg.training, stream(seed, Stream.TRAINING, train_key))


def validation_ber(cfg: ExperimentConfig, params: ReceiverParams, ch: ChannelRealization,
                   phi: PhaseConfig, noise: NoiseModel, seed: int) -> BerResult:
    c = constellation_of(cfg)
    n_sym = symbols_for_bits(cfg.eval.n_val_bits, cfg.dims.k, c)
    return evaluate_ber(params, ch, phi, noise, n_sym, stream(seed, Stream.VALIDATION), c)


def alternating_step_receiver(cfg: ExperimentConfig, ch: ChannelRealization, phi: PhaseConfig,
                              seed: int, t: int,
                              noise: NoiseModel | None = None) -> tuple[ReceiverParams, BerResult]:
    """Receiver update for a fixed configuration using the pilots of iteration ``t``."""
    noise = noise or NoiseModel.from_snr_db(cfg.bo.snr_db)
    params = train_receiver(cfg, ch, phi, noise, seed, t, t, t)
    return params, validation_ber(cfg, params, ch, phi, noise, seed)


def _propose_bo(cfg, data: gp.GpDataset, t: int, seed: int) -> PhaseConfig:
    try:
        model = gp.fit(data, cfg.bo.lengthscale, cfg.bo.jitter, cfg.bo.obs_noise)
    except gp.GpFitError as err:
        raise gp.GpFitError(f"iteration {t}: {err}") from err
    best = max(data.observations)
    return gp.propose_next(model, best, data.configs, cfg.dims.p, cfg.dims.b, cfg.bo.search,
                           stream(seed, Stream.ACQUISITION, t))


def _propose_random(cfg, data: gp.GpDataset, t: int, seed: int) -> PhaseConfig:
    seen = {tuple(c.indices) for c in data.configs}
    total = (2**cfg.dims.b) ** cfg.dims.p
    gen = stream(seed, Stream.ACQUISITION, t, 1).generator()
    if len(seen) >= total:
        return random_phase_config(gen, cfg.dims.p, cfg.dims.b)
    return gp.random_unobserved(gen, seen, cfg.dims.p, cfg.dims.b)


def _run(cfg: ExperimentConfig, seed: int, strategy: str,
         ch: ChannelRealization | None = None, noise: NoiseModel | None = None) -> RunResult:
    ch = ch or channel_for(cfg, seed)
    noise = noise or NoiseModel.from_snr_db(cfg.bo.snr_db)
    propose = {"bo": _propose_bo, "random": _propose_random}[strategy]
    phi = initial_phase(cfg, seed)
    data = gp.GpDataset()
    trace: list[TraceEntry] = []
    n_bo = cfg.bo.n_bo
    for t in range(1, n_bo + 1):
        start = time.perf_counter()
        params, res = alternating_step_receiver(cfg, ch, phi, seed, t, noise)
        if not math.isfinite(res.ber):
            raise NonFiniteBerError(f"iteration {t}: BER is {res.ber}")
        loss = float(np.mean(params.stage_losses[-1]))
        trace.append(TraceEntry(t, phi, res.ber, res.ser, res.n_bits, loss,
                                time.perf_counter() - start, _stream_ids(seed, t)))
        data.add(phi, -res.ber)
        if t < n_bo:
            phi = propose(cfg, data, t, seed)

    bers = np.array([e.ber for e in trace])
    best_index = int(np.argmin(bers))  # first minimum: earliest iteration wins ties
    best_phi = trace[best_index].phi
    # confirmation: resend the first pilot block through the chosen configuration
    receiver = train_receiver(cfg, ch, best_phi, noise, seed, pilot_key=1, noise_key=n_bo + 1,
                              train_key=FINAL_KEY)
    confirmation = validation_ber(cfg, receiver, ch, best_phi, noise, seed)
    return RunResult(strategy, seed, trace, best_index, best_phi, receiver, confirmation, data,
                     pilot_transmissions=(n_bo + 1) * cfg.training.n_tr)


def run_joint(cfg: ExperimentConfig, seed: int | None = None, ch: ChannelRealization | None = None,
              noise: NoiseModel | None = None) -> RunResult:
    """BO-driven joint design; see the module docstring for the seed schedule."""
    return _run(cfg, cfg.seed if seed is None else seed, "bo", ch, noise)


def run_random_baseline(cfg: ExperimentConfig, seed: int | None = None,
                        ch: ChannelRealization | None = None,
                        noise: NoiseModel | None = None) -> RunResult:
    """Same loop with configurations drawn uniformly (without replacement)."""
    return _run(cfg, cfg.seed if seed is None else seed, "random", ch, noise)


def dumps(result: RunResult, timing: bool = False) -> str:
    return json.dumps(result.to_json(timing), indent=1, sort_keys=True)
