"""RIS-parameterized linear Gaussian uplink channel.

The received block is ``Y = (H2 diag(phi) H1 + G) S + W`` with ``W`` i.i.d.
CN(0, sigma2). ``H1`` and ``G`` are Rayleigh, ``H2`` is Rician with factor
``kappa``. A realization is drawn once per experiment and held fixed while
the phase configuration changes.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .numerics import InvalidParameterError, sample_complex_gaussian, _as_generator


class ShapeError(ValueError):
    """Array dimensions are inconsistent."""


def phase_grid(b: int) -> np.ndarray:
    """The 2**b admissible phase angles ``2**(1-b) * pi * m``."""
    if b < 1:
        raise InvalidParameterError(f"resolution bits must be >= 1, got {b}")
    return 2.0 ** (1 - b) * math.pi * np.arange(2**b)


@dataclass(frozen=True, eq=False)
class PhaseConfig:
    phases: np.ndarray
    resolution_bits: int

    def __post_init__(self):
        phases = np.asarray(self.phases, dtype=np.complex128).reshape(-1)
        phases.setflags(write=False)
        object.__setattr__(self, "phases", phases)

    @property
    def p(self) -> int:
        return self.phases.shape[0]

    @property
    def indices(self) -> tuple[int, ...]:
        """Grid index m of every element."""
        step = 2.0 ** (1 - self.resolution_bits) * math.pi
        ang = np.mod(np.angle(self.phases), 2 * math.pi)
        return tuple(int(v) % 2**self.resolution_bits for v in np.rint(ang / step))

    @property
    def angles(self) -> np.ndarray:
        return np.asarray(self.indices) * 2.0 ** (1 - self.resolution_bits) * math.pi

    def embedding(self) -> np.ndarray:
        """Real vector ``(Re phi, Im phi)`` used by the GP kernel."""
        return np.concatenate([self.phases.real, self.phases.imag])

    @classmethod
    def from_indices(cls, indices, b: int) -> PhaseConfig:
        angles = np.asarray(indices, dtype=np.float64) * 2.0 ** (1 - b) * math.pi
        # exact unit-modulus values on the grid
        return cls(np.exp(1j * angles), b)

    def __eq__(self, other):
        if not isinstance(other, PhaseConfig):
            return NotImplemented
        return self.resolution_bits == other.resolution_bits and self.indices == other.indices

    def __hash__(self):
        return hash((self.resolution_bits, self.indices))

    def __repr__(self):
        return f"PhaseConfig(indices={list(self.indices)}, b={self.resolution_bits})"


def quantize_phases(angles, b: int) -> PhaseConfig:
    """Snap each angle to the nearest point of the b-bit grid.

    Ties go to the smaller grid index; angles are taken modulo 2*pi.
    """
    if b < 1:
        raise InvalidParameterError(f"resolution bits must be >= 1, got {b}")
    angles = np.atleast_1d(np.asarray(angles, dtype=np.float64))
    if angles.size < 1:
        raise InvalidParameterError("at least one RIS element is required")
    levels = 2**b
    step = 2.0 ** (1 - b) * math.pi
    pos = np.mod(angles, 2 * math.pi) / step
    lower = np.floor(pos)
    frac = pos - lower
    m = np.where(frac > 0.5, lower + 1, lower).astype(np.int64) % levels
    return PhaseConfig.from_indices(m, b)


def random_phase_config(rng, p: int, b: int) -> PhaseConfig:
    gen = _as_generator(rng)
    return PhaseConfig.from_indices(gen.integers(0, 2**b, size=p), b)


@dataclass(frozen=True)
class NoiseModel:
    sigma2: float

    def __post_init__(self):
        if not (self.sigma2 >= 0) or not math.isfinite(self.sigma2):
            raise InvalidParameterError(f"sigma2 must be finite and >= 0, got {self.sigma2}")

    @classmethod
    def from_snr_db(cls, snr_db: float) -> NoiseModel:
        return cls(10.0 ** (-snr_db / 10.0))

    @property
    def snr_db(self) -> float:
        return math.inf if self.sigma2 == 0 else -10.0 * math.log10(self.sigma2)


@dataclass(frozen=True, eq=False)
class ChannelRealization:
    h1: np.ndarray
    h2: np.ndarray
    g: np.ndarray
    gamma: float = 1.0
    beta: float = 1.0
    kappa: float = 0.0

    def __post_init__(self):
        for name in ("h1", "h2", "g"):
            arr = np.array(getattr(self, name), dtype=np.complex128, ndmin=2)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        p, k = self.h1.shape
        n, p2 = self.h2.shape
        if p2 != p or self.g.shape != (n, k):
            raise ShapeError(
                f"inconsistent channel shapes h1={self.h1.shape} h2={self.h2.shape} g={self.g.shape}"
            )
        if self.gamma <= 0 or self.beta <= 0:
            raise InvalidParameterError("pathloss factors must be positive")
        if self.kappa < 0:
            raise InvalidParameterError("Rician factor must be >= 0")

    @property
    def n(self) -> int:
        return self.g.shape[0]

    @property
    def k(self) -> int:
        return self.g.shape[1]

    @property
    def p(self) -> int:
        return self.h1.shape[0]

    def to_json(self) -> dict:
        def enc(m):
            return [[[float(z.real), float(z.imag)] for z in row] for row in m]

        return {
            "h1": enc(self.h1),
            "h2": enc(self.h2),
            "g": enc(self.g),
            "gamma": self.gamma,
            "beta": self.beta,
            "kappa": self.kappa,
        }

    @classmethod
    def from_json(cls, doc: dict) -> ChannelRealization:
        def dec(rows):
            arr = np.asarray(rows, dtype=np.float64)
            return arr[..., 0] + 1j * arr[..., 1]

        return cls(
            h1=dec(doc["h1"]),
            h2=dec(doc["h2"]),
            g=dec(doc["g"]),
            gamma=float(doc["gamma"]),
            beta=float(doc["beta"]),
            kappa=float(doc["kappa"]),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=1))

    @classmethod
    def load(cls, path) -> ChannelRealization:
        return cls.from_json(json.loads(Path(path).read_text()))


def draw_channel(rng, n: int, k: int, p: int, kappa: float = 10.0, beta: float = 1.0,
                 gamma: float = 1.0) -> ChannelRealization:
    if min(n, k, p) < 1:
        raise InvalidParameterError(f"dimensions must be >= 1, got n={n} k={k} p={p}")
    if not (kappa >= 0):
        raise InvalidParameterError(f"Rician factor must be >= 0, got {kappa}")
    gen = _as_generator(rng)
    h1 = gamma * sample_complex_gaussian(gen, p, k)
    g = gamma * sample_complex_gaussian(gen, n, k)
    los = sample_complex_gaussian(gen, n, p)
    nlos = sample_complex_gaussian(gen, n, p)
    if math.isinf(kappa):
        h2 = beta * los
    else:
        h2 = beta * (math.sqrt(kappa / (1 + kappa)) * los + math.sqrt(1 / (1 + kappa)) * nlos)
    return ChannelRealization(h1=h1, h2=h2, g=g, gamma=gamma, beta=beta, kappa=kappa)


def effective_matrix(ch: ChannelRealization, phi: PhaseConfig) -> np.ndarray:
    """``H2 diag(phi) H1 + G``."""
    if phi.p != ch.p:
        raise ShapeError(f"phase config has {phi.p} elements, channel has P={ch.p}")
    return (ch.h2 * phi.phases[None, :]) @ ch.h1 + ch.g


def add_noise(x: np.ndarray, noise: NoiseModel, rng) -> np.ndarray:
    gen = _as_generator(rng)
    if noise.sigma2 == 0:
        return x.astype(np.complex128)
    scale = math.sqrt(noise.sigma2 / 2.0)
    w = scale * (gen.standard_normal(x.shape) + 1j * gen.standard_normal(x.shape))
    return x + w


def transmit(ch: ChannelRealization, phi: PhaseConfig, symbols: np.ndarray, noise: NoiseModel,
             rng) -> np.ndarray:
    """Pass a ``K x T`` symbol block through the channel, returning ``N x T``."""
    symbols = np.asarray(symbols)
    if symbols.ndim != 2 or symbols.shape[0] != ch.k:
        raise ShapeError(f"symbols must be K x T with K={ch.k}, got {symbols.shape}")
    return add_noise(effective_matrix(ch, phi) @ symbols, noise, rng)
