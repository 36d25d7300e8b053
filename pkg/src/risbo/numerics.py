"""Seeded random substreams and small dense linear-algebra helpers."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import lapack


class InvalidParameterError(ValueError):
    """A numeric argument is outside its admissible range."""


class DecompositionError(np.linalg.LinAlgError):
    """Cholesky factorization failed at a given pivot."""

    def __init__(self, pivot: int):
        self.pivot = pivot
        super().__init__(f"matrix is not positive definite (failing pivot index {pivot})")


class Stream(enum.IntEnum):
    """Consumer labels for substreams of one master seed."""

    CHANNEL = 0
    NOISE = 1
    INIT = 2
    ACQUISITION = 3
    PILOTS = 4
    VALIDATION = 5
    TRAINING = 6
    TEST = 7


@dataclass(frozen=True)
class RngStream:
    """A named, reproducible substream of a master seed.

    ``key`` holds extra integers (for instance an iteration index) so that
    each logical consumer gets its own independent sequence. The generator is
    rebuilt from scratch on every call to :meth:`generator`, so two calls
    return identical draw sequences.
    """

    seed: int
    stream_id: int
    key: tuple[int, ...] = ()

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(
            entropy=self.seed & (2**64 - 1),
            spawn_key=(int(self.stream_id), *map(int, self.key)),
        )
        return np.random.default_rng(ss)

    def child(self, *key: int) -> RngStream:
        return RngStream(self.seed, self.stream_id, self.key + tuple(key))


def stream(seed: int, stream_id: int, *key: int) -> RngStream:
    return RngStream(int(seed), int(stream_id), tuple(int(k) for k in key))


def _as_generator(rng: RngStream | np.random.Generator) -> np.random.Generator:
    if isinstance(rng, RngStream):
        return rng.generator()
    return rng


def sample_complex_gaussian(rng, rows: int, cols: int, variance: float = 1.0) -> np.ndarray:
    """Draw a ``rows x cols`` matrix of i.i.d. CN(0, variance) entries."""
    if rows < 1 or cols < 1:
        raise InvalidParameterError(f"shape must be positive, got ({rows}, {cols})")
    if not math.isfinite(variance) or variance < 0:
        raise InvalidParameterError(f"variance must be finite and >= 0, got {variance}")
    gen = _as_generator(rng)
    scale = math.sqrt(variance / 2.0)
    re = gen.standard_normal((rows, cols))
    im = gen.standard_normal((rows, cols))
    return scale * (re + 1j * im)


def real_equivalent(m: np.ndarray) -> np.ndarray:
    """Block form ``[[Re M, -Im M], [Im M, Re M]]`` of a complex matrix."""
    m = np.asarray(m)
    if m.ndim == 1:
        m = m[:, None]
    re, im = m.real, m.imag
    return np.block([[re, -im], [im, re]]).astype(np.float64)


def stack_real(x: np.ndarray) -> np.ndarray:
    """Stack real over imaginary parts along the first axis."""
    x = np.asarray(x)
    return np.concatenate([x.real, x.imag], axis=0).astype(np.float64)


def unstack_real(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    half = x.shape[0] // 2
    return x[:half] + 1j * x[half:]


def cholesky(a: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor of an SPD matrix, raising :class:`DecompositionError`."""
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    c, info = lapack.dpotrf(a, lower=True, clean=True)
    if info > 0:
        raise DecompositionError(info - 1)
    if info < 0:
        raise ValueError(f"illegal argument {-info} passed to dpotrf")
    return c


def cholesky_factor_solve(lower: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    x, info = lapack.dpotrs(lower, np.asarray(rhs, dtype=np.float64), lower=True)
    if info != 0:
        raise ValueError(f"dpotrs failed with info={info}")
    return x


def cholesky_solve(a: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve ``a x = rhs`` for symmetric positive-definite ``a``.

    Any jitter must already be on the diagonal. Raises
    :class:`DecompositionError` naming the zero-based failing pivot.
    """
    rhs = np.asarray(rhs, dtype=np.float64)
    vector = rhs.ndim == 1
    b = rhs[:, None] if vector else rhs
    x = cholesky_factor_solve(cholesky(a), b)
    return x[:, 0] if vector else x
