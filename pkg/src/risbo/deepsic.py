"""Learned soft interference cancellation (DeepSIC) receiver.

The receiver works on the real-valued BPSK view of the uplink. For each
cancellation iteration ``q`` and real user ``k`` a small classifier maps
the received vector plus the previous-iteration soft estimates of every
other user to a distribution over that user's symbol. Blocks of one
iteration only read outputs of the previous one, so all users of a stage
are trained together as one stacked network set.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import modem
from .channel import ChannelRealization, NoiseModel, PhaseConfig, ShapeError, transmit
from .modem import Constellation, InvalidStateError
from .neural import (
    InvalidInputError,
    MlpParams,
    forward,
    init_mlp,
    stack_params,
    train,
)
from .numerics import RngStream

M_REAL = 2


@dataclass(frozen=True)
class TrainingConfig:
    n_tr: int = 400
    q: int = 5
    lr: float = 0.01
    epochs: int = 70
    batch_size: int = 32
    hidden: tuple[int, int] = (60, 30)


def feature_length(n_real: int, k_real: int, m: int = M_REAL) -> int:
    return n_real + (k_real - 1) * (m - 1)


def build_features(y: np.ndarray, others: np.ndarray) -> np.ndarray:
    """Concatenate received rows with the free coordinates of the interferers.

    ``y`` is ``(..., N_real)`` and ``others`` is ``(K_real - 1, ..., M)``
    in ascending user order; only the first ``M - 1`` probabilities of each
    interferer are appended.
    """
    y = np.asarray(y, dtype=np.float64)
    others = np.asarray(others, dtype=np.float64)
    if others.ndim < 1 or (others.size and others.shape[1:-1] != y.shape[:-1]):
        raise ShapeError(f"soft estimates {others.shape} do not align with samples {y.shape}")
    free = [others[i, ..., :-1] for i in range(others.shape[0])]
    return np.concatenate([y, *free], axis=-1)


def _stage_features(y: np.ndarray, probs: np.ndarray) -> np.ndarray:
    """Features of every user: ``(K, T, d_in)`` from ``y (T, N)`` and ``probs (K, T, M)``."""
    k_real = probs.shape[0]
    free = probs[..., :-1]  # (K, T, M-1)
    feats = []
    for k in range(k_real):
        others = [free[l] for l in range(k_real) if l != k]
        feats.append(np.concatenate([y, *others], axis=-1))
    return np.stack(feats)


def _uniform(k_real: int, t: int) -> np.ndarray:
    return np.full((k_real, t, M_REAL), 1.0 / M_REAL)


@dataclass
class ReceiverParams:
    """Trained classifier grid; ``stages[q]`` stacks the K_real users of iteration q."""

    stages: list[MlpParams]
    q: int
    k_real: int
    n_real: int
    stage_losses: list[np.ndarray] = field(default_factory=list)

    @property
    def trained(self) -> bool:
        return len(self.stages) == self.q

    def cell(self, k: int, q: int) -> MlpParams:
        """Network of real user ``k`` at iteration ``q`` (both zero-based)."""
        return self.stages[q].select(k)

    def to_json(self) -> dict:
        return {
            "q": self.q,
            "k_real": self.k_real,
            "n_real": self.n_real,
            "m_real": M_REAL,
            "grid": [[self.cell(k, q).to_json() for k in range(self.k_real)] for q in range(self.q)],
        }

    @classmethod
    def from_json(cls, doc: dict) -> ReceiverParams:
        stages = [stack_params([MlpParams.from_json(c) for c in row]) for row in doc["grid"]]
        return cls(stages, int(doc["q"]), int(doc["k_real"]), int(doc["n_real"]))


def train_sequential(labels: np.ndarray, y: np.ndarray, cfg: TrainingConfig,
                     rng: RngStream) -> ReceiverParams:
    """Sequential stage-by-stage training.

    ``labels`` is ``(K_real, N_tr)`` class indices and ``y`` is
    ``(N_tr, N_real)``. Each stage starts from fresh weights drawn from
    ``rng.child(q)``; after training, its outputs on the training set feed
    the next stage.
    """
    labels = np.asarray(labels, dtype=np.int64)
    y = np.asarray(y, dtype=np.float64)
    if y.ndim != 2 or y.shape[0] == 0:
        raise InvalidInputError("training set is empty")
    if labels.shape[1] != y.shape[0]:
        raise ShapeError(f"labels {labels.shape} and samples {y.shape} are not aligned")
    k_real, n_tr = labels.shape
    n_real = y.shape[1]
    d_in = feature_length(n_real, k_real)
    probs = _uniform(k_real, n_tr)
    stages, losses = [], []
    for q in range(cfg.q):
        feats = _stage_features(y, probs)
        gen = rng.child(q).generator()
        nets = init_mlp(gen, d_in, M_REAL, cfg.hidden, batch_shape=(k_real,))
        nets, report = train(nets, feats, labels, cfg.epochs, cfg.batch_size, cfg.lr, gen)
        probs = forward(nets, feats)
        stages.append(nets)
        losses.append(report.final_loss)
    return ReceiverParams(stages, cfg.q, k_real, n_real, losses)


def soft_estimates(params: ReceiverParams, y: np.ndarray) -> np.ndarray:
    if not params.trained:
        raise InvalidStateError("receiver has not been trained")
    y = np.asarray(y, dtype=np.float64)
    if y.shape[-1] != params.n_real:
        raise ShapeError(f"received rows have {y.shape[-1]} entries, receiver expects {params.n_real}")
    probs = _uniform(params.k_real, y.shape[0])
    for nets in params.stages:
        probs = forward(nets, _stage_features(y, probs))
    return probs


def detect(params: ReceiverParams, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Hard class decisions ``(K_real, T)`` and final soft estimates.

    ``np.argmax`` returns the first maximum, so ties go to class 0.
    """
    probs = soft_estimates(params, y)
    return np.argmax(probs, axis=-1), probs


def class_to_symbol(classes: np.ndarray) -> np.ndarray:
    return np.where(np.asarray(classes) == 1, 1.0, -1.0)


def symbol_to_class(real_symbols: np.ndarray) -> np.ndarray:
    return modem.real_bits(real_symbols)


def make_dataset(ch: ChannelRealization, phi: PhaseConfig, noise: NoiseModel,
                 c: Constellation, n: int, symbols_rng, noise_rng):
    """Draw ``n`` pilots, transmit them, and return the real-view arrays.

    Returns ``(labels (K_real, n), y (n, N_real), complex symbols, bits)``.
    """
    symbols, bits = modem.random_symbols(symbols_rng, c, ch.k, n)
    received = transmit(ch, phi, symbols, noise, noise_rng)
    s_real, y_real = modem.real_view(c, symbols, received)
    return symbol_to_class(s_real), y_real.T, symbols, bits


@dataclass(frozen=True)
class BerResult:
    ber: float
    errors: int
    n_bits: int
    ser: float


def evaluate_ber(params: ReceiverParams, ch: ChannelRealization, phi: PhaseConfig,
                 noise: NoiseModel, n_test_symbols: int, rng: RngStream,
                 c: Constellation | None = None) -> BerResult:
    """BER on freshly drawn symbol vectors (``n_test_symbols`` time slots)."""
    if n_test_symbols < 1:
        raise ValueError("n_test_symbols must be >= 1")
    c = c or Constellation.qpsk()
    _, y, symbols, bits = make_dataset(ch, phi, noise, c, n_test_symbols, rng.child(0), rng.child(1))
    classes, _ = detect(params, y)
    real_dec = class_to_symbol(classes)
    decided = modem.from_real_symbols(real_dec) if c.kind is modem.Modulation.QPSK else real_dec + 0j
    errors, total, ber = modem.count_bit_errors(bits, c.symbol_bits(decided))
    ser = float(np.mean(np.abs(decided - symbols) > 1e-9))
    return BerResult(ber, errors, total, ser)


def symbols_for_bits(n_bits: int, k: int, c: Constellation) -> int:
    return max(1, math.ceil(n_bits / (k * c.bits_per_symbol)))
