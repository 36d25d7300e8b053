"""BPSK/QPSK mapping, Gray labels, and the complex-to-real system transform."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .channel import ShapeError
from .numerics import _as_generator, real_equivalent, stack_real


class InvalidStateError(RuntimeError):
    pass


class Modulation(str, enum.Enum):
    BPSK = "bpsk"
    QPSK = "qpsk"


@dataclass(frozen=True, eq=False)
class Constellation:
    """Symbol alphabet with its bit labels.

    BPSK maps bit 0 to -1 and bit 1 to +1, so the class index of a BPSK
    symbol equals its bit. QPSK labels the in-phase and quadrature parts
    independently with that BPSK rule, which is a Gray labeling.
    """

    kind: Modulation
    points: np.ndarray
    labels: np.ndarray  # (M, bits_per_symbol)

    @property
    def m(self) -> int:
        return len(self.points)

    @property
    def bits_per_symbol(self) -> int:
        return self.labels.shape[1]

    @classmethod
    def bpsk(cls) -> Constellation:
        return cls(Modulation.BPSK, np.array([-1.0 + 0j, 1.0 + 0j]), np.array([[0], [1]]))

    @classmethod
    def qpsk(cls) -> Constellation:
        points = np.array([1 + 1j, -1 + 1j, -1 - 1j, 1 - 1j])
        labels = np.stack([(points.real > 0), (points.imag > 0)], axis=1).astype(np.int64)
        return cls(Modulation.QPSK, points, labels)

    @classmethod
    def of(cls, kind) -> Constellation:
        kind = Modulation(kind)
        return cls.bpsk() if kind is Modulation.BPSK else cls.qpsk()

    def map_bits(self, bits: np.ndarray) -> np.ndarray:
        """Bits of shape ``(K, T, bits_per_symbol)`` to a ``K x T`` symbol block."""
        weights = 2 ** np.arange(self.bits_per_symbol)[::-1]
        label_ids = self.labels @ weights
        lookup = np.empty(self.m, dtype=np.int64)
        lookup[label_ids] = np.arange(self.m)
        return self.points[lookup[bits @ weights]]

    def symbol_bits(self, symbols: np.ndarray) -> np.ndarray:
        idx = np.argmin(np.abs(symbols[..., None] - self.points), axis=-1)
        return self.labels[idx]


def random_symbols(rng, c: Constellation, k: int, t: int) -> tuple[np.ndarray, np.ndarray]:
    """I.i.d. uniform symbols: returns ``(symbols K x T, bits K x T x bps)``."""
    gen = _as_generator(rng)
    bits = gen.integers(0, 2, size=(k, t, c.bits_per_symbol))
    return c.map_bits(bits), bits


@dataclass(frozen=True)
class RealSystem:
    """Real-valued BPSK view of a complex problem.

    Rows of ``symbols`` index real users: the first K are in-phase parts,
    the next K quadrature parts. ``sigma2`` is the per-dimension noise
    variance.
    """

    h: np.ndarray | None
    symbols: np.ndarray
    y: np.ndarray
    sigma2: float | None = None


def to_real_system(c: Constellation, symbols: np.ndarray, y: np.ndarray,
                   h: np.ndarray | None = None, sigma2: float | None = None) -> RealSystem:
    """Map a K-user complex QPSK problem onto 2K real BPSK users."""
    if c.kind is not Modulation.QPSK:
        raise InvalidStateError("to_real_system requires a QPSK constellation")
    return RealSystem(
        h=None if h is None else real_equivalent(h),
        symbols=stack_real(symbols),
        y=stack_real(y),
        sigma2=None if sigma2 is None else sigma2 / 2.0,
    )


def from_real_symbols(real_symbols: np.ndarray) -> np.ndarray:
    """Re-pair 2K real BPSK rows into K complex QPSK rows."""
    real_symbols = np.asarray(real_symbols, dtype=np.float64)
    k = real_symbols.shape[0] // 2
    return real_symbols[:k] + 1j * real_symbols[k:]


def real_view(c: Constellation, symbols: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Real BPSK user rows and real received rows for either modulation.

    For BPSK the users are already real, so only the received block is
    stacked.
    """
    if c.kind is Modulation.QPSK:
        rs = to_real_system(c, symbols, y)
        return rs.symbols, rs.y
    return np.asarray(symbols).real.astype(np.float64), stack_real(y)


def real_bits(real_symbols: np.ndarray) -> np.ndarray:
    """BPSK bit of every real symbol (+1 -> 1, -1 -> 0)."""
    return (np.asarray(real_symbols) > 0).astype(np.int64)


def count_bit_errors(truth: np.ndarray, decided: np.ndarray) -> tuple[int, int, float]:
    truth = np.asarray(truth)
    decided = np.asarray(decided)
    if truth.shape != decided.shape:
        raise ShapeError(f"bit matrices differ in shape: {truth.shape} vs {decided.shape}")
    total = int(truth.size)
    errors = int(np.count_nonzero(truth != decided))
    return errors, total, errors / total if total else 0.0
