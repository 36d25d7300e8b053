"""Gaussian-process surrogate over RIS phase configurations.

Configurations enter the kernel through the real embedding
``(Re phi, Im phi)`` so that the squared distance equals the complex
``||phi_i - phi_j||^2`` and respects phase wrap-around. The objective is
``g = -BER`` (maximized). Observations are standardized before fitting and
the prior mean is zero on the standardized scale.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from .channel import PhaseConfig, ShapeError, quantize_phases
from .numerics import DecompositionError, _as_generator, cholesky, cholesky_factor_solve

MAX_JITTER = 1e-4
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


class GpFitError(RuntimeError):
    pass


class SearchExhaustedError(RuntimeError):
    pass


def se_kernel(a, b, lengthscale: float = 1.0) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"kernel arguments differ in shape: {a.shape} vs {b.shape}")
    if lengthscale <= 0:
        raise ValueError("lengthscale must be positive")
    return math.exp(-0.5 * float(np.sum((a - b) ** 2)) / lengthscale**2)


def kernel_matrix(xa: np.ndarray, xb: np.ndarray, lengthscale: float = 1.0) -> np.ndarray:
    """Squared-exponential Gram matrix between row sets."""
    sq = (
        np.sum(xa**2, axis=1)[:, None]
        + np.sum(xb**2, axis=1)[None, :]
        - 2.0 * xa @ xb.T
    )
    return np.exp(-0.5 * np.maximum(sq, 0.0) / lengthscale**2)


def angles_embedding(angles: np.ndarray) -> np.ndarray:
    """``(..., P)`` angles to ``(..., 2P)`` rows ``(cos, sin)``."""
    return np.concatenate([np.cos(angles), np.sin(angles)], axis=-1)


@dataclass
class GpDataset:
    configs: list[PhaseConfig] = field(default_factory=list)
    observations: list[float] = field(default_factory=list)

    def __len__(self):
        return len(self.configs)

    def add(self, phi: PhaseConfig, g: float) -> None:
        self.configs.append(phi)
        self.observations.append(float(g))

    def inputs(self) -> np.ndarray:
        return np.stack([c.embedding() for c in self.configs])

    def to_json(self) -> dict:
        return {
            "resolution_bits": self.configs[0].resolution_bits if self.configs else None,
            "configs": [list(c.indices) for c in self.configs],
            "observations": list(self.observations),
        }

    @classmethod
    def from_json(cls, doc: dict) -> GpDataset:
        b = doc["resolution_bits"]
        return cls([PhaseConfig.from_indices(i, b) for i in doc["configs"]],
                   [float(v) for v in doc["observations"]])

    def dumps(self) -> str:
        return json.dumps(self.to_json())


@dataclass(frozen=True)
class PosteriorPrediction:
    mean: float
    variance: float


@dataclass
class GpModel:
    x: np.ndarray
    y_std: np.ndarray
    chol: np.ndarray
    alpha: np.ndarray
    y_mean: float
    y_scale: float
    lengthscale: float
    jitter: float
    noise: float

    def predict(self, xq: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """De-standardized posterior mean and latent variance at rows ``xq``."""
        xq = np.atleast_2d(np.asarray(xq, dtype=np.float64))
        if xq.shape[1] != self.x.shape[1]:
            raise ShapeError(f"query dimension {xq.shape[1]} != training dimension {self.x.shape[1]}")
        ks = kernel_matrix(self.x, xq, self.lengthscale)
        mean = ks.T @ self.alpha
        v = cholesky_factor_solve(self.chol, ks)
        var = 1.0 - np.sum(ks * v, axis=0)
        var = np.maximum(var, 0.0)
        return mean * self.y_scale + self.y_mean, var * self.y_scale**2


def fit(data: GpDataset, lengthscale: float = 1.0, jitter: float = 1e-10,
        noise: float = 1e-6) -> GpModel:
    """Standardize observations and factor ``K + (noise + jitter) I``.

    The jitter is multiplied by ten until the factorization succeeds or it
    would exceed 1e-4.
    """
    if len(data) < 1:
        raise GpFitError("cannot fit a GP to an empty dataset")
    x = data.inputs()
    y = np.asarray(data.observations, dtype=np.float64)
    if not np.all(np.isfinite(y)):
        raise GpFitError("observations contain non-finite values")
    y_mean = float(y.mean())
    y_scale = float(y.std())
    if not y_scale > 0:
        y_scale = 1.0
    y_std = (y - y_mean) / y_scale
    gram = kernel_matrix(x, x, lengthscale)
    j = jitter
    while True:
        try:
            chol = cholesky(gram + (noise + j) * np.eye(len(y)))
            break
        except DecompositionError as err:
            j = max(j * 10.0, 1e-12)
            if j > MAX_JITTER:
                raise GpFitError(f"Cholesky failed even with jitter {MAX_JITTER:g}: {err}") from err
    alpha = cholesky_factor_solve(chol, y_std[:, None])[:, 0]
    return GpModel(x, y_std, chol, alpha, y_mean, y_scale, lengthscale, j, noise)


def _query_rows(query) -> np.ndarray:
    if isinstance(query, PhaseConfig):
        return query.embedding()[None, :]
    return np.atleast_2d(np.asarray(query, dtype=np.float64))


def posterior(model: GpModel, query) -> PosteriorPrediction:
    mean, var = model.predict(_query_rows(query))
    return PosteriorPrediction(float(mean[0]), float(var[0]))


def ei_from_moments(mean, std, best) -> np.ndarray:
    """Closed-form expected improvement ``d * Phi(d/s) + s * phi(d/s)``, ``d = mean - best``."""
    mean = np.asarray(mean, dtype=np.float64)
    std = np.asarray(std, dtype=np.float64)
    delta = mean - best
    out = np.maximum(delta, 0.0)
    pos = std > 0
    s = np.where(pos, std, 1.0)
    z = delta / s
    ei = delta * ndtr(z) + s * _INV_SQRT_2PI * np.exp(-0.5 * z * z)
    out = np.where(pos, np.maximum(ei, 0.0), out)
    return out


def ei_batch(model: GpModel, xq: np.ndarray, best: float) -> np.ndarray:
    mean, var = model.predict(xq)
    return ei_from_moments(mean, np.sqrt(var), best)


def expected_improvement(model: GpModel, query, best_observed: float) -> float:
    return float(ei_batch(model, _query_rows(query), best_observed)[0])


@dataclass(frozen=True)
class SearchConfig:
    restarts: int = 8
    sweeps: int = 2
    scan_points: int = 16
    golden_iters: int = 20
    exhaustive_threshold: int = 4096


def grid_indices(p: int, b: int) -> np.ndarray:
    """All ``(2**b)**p`` index vectors in lexicographic order."""
    return np.array(list(itertools.product(range(2**b), repeat=p)), dtype=np.int64)


def _index_embedding(idx: np.ndarray, b: int) -> np.ndarray:
    return angles_embedding(idx * (2.0 ** (1 - b) * math.pi))


_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def _coordinate_ascent(model: GpModel, best: float, angles: np.ndarray,
                       search: SearchConfig) -> np.ndarray:
    """Per-coordinate scan plus golden-section refinement, vectorized over restarts."""
    angles = angles.copy()
    r, p = angles.shape
    scan = np.linspace(0.0, 2 * math.pi, search.scan_points, endpoint=False)
    width = 2 * math.pi / search.scan_points

    def ei_at(coord, values):
        trial = np.repeat(angles[:, None, :], values.shape[1], axis=1)
        trial[:, :, coord] = values
        e = ei_batch(model, angles_embedding(trial.reshape(-1, p)), best)
        return e.reshape(r, values.shape[1])

    for _ in range(search.sweeps):
        for coord in range(p):
            cand = np.concatenate([scan[None, :].repeat(r, 0), angles[:, coord:coord + 1]], axis=1)
            vals = ei_at(coord, cand)
            centre = cand[np.arange(r), np.argmax(vals, axis=1)]
            lo, hi = centre - width, centre + width
            x1 = hi - _GOLDEN * (hi - lo)
            x2 = lo + _GOLDEN * (hi - lo)
            f = ei_at(coord, np.stack([x1, x2], axis=1))
            f1, f2 = f[:, 0], f[:, 1]
            for _ in range(search.golden_iters):
                left = f1 > f2
                hi = np.where(left, x2, hi)
                lo = np.where(left, lo, x1)
                probe = np.where(left, hi - _GOLDEN * (hi - lo), lo + _GOLDEN * (hi - lo))
                fp = ei_at(coord, probe[:, None])[:, 0]
                x1, x2 = np.where(left, probe, x2), np.where(left, x1, probe)
                f1, f2 = np.where(left, fp, f2), np.where(left, f1, fp)
            refined = np.where(f1 >= f2, x1, x2)
            stack = np.stack([centre, refined], axis=1)
            vals = ei_at(coord, stack)
            angles[:, coord] = np.mod(stack[np.arange(r), np.argmax(vals, axis=1)], 2 * math.pi)
    return angles


def _discrete_polish(model: GpModel, best: float, idx: np.ndarray, b: int) -> np.ndarray:
    """Coordinate ascent over grid levels until no single-element change helps."""
    idx = idx.copy()
    r, p = idx.shape
    levels = 2**b
    for _ in range(p * levels):
        changed = False
        for coord in range(p):
            trial = np.repeat(idx[:, None, :], levels, axis=1)
            trial[:, :, coord] = np.arange(levels)
            e = ei_batch(model, _index_embedding(trial.reshape(-1, p), b), best).reshape(r, levels)
            cur = e[np.arange(r), idx[:, coord]]
            pick = np.argmax(e, axis=1)
            better = e[np.arange(r), pick] > cur
            if np.any(better):
                idx[better, coord] = pick[better]
                changed = True
        if not changed:
            break
    return idx


def propose_next(model: GpModel, best_observed: float, observed: list[PhaseConfig], p: int,
                 b: int, search: SearchConfig, rng) -> PhaseConfig:
    """Maximize EI over the b-bit grid, never returning an observed config.

    Small grids (at most ``search.exhaustive_threshold`` points) are
    enumerated. Larger ones use multi-start continuous coordinate search on
    the angles, quantization, and a discrete polish; the restarts are
    random plus the incumbent best observation.
    """
    gen = _as_generator(rng)
    total = (2**b) ** p
    seen = {tuple(c.indices) for c in observed}
    if total <= len(seen):
        raise SearchExhaustedError(f"all {total} grid configurations have been observed")

    if total <= search.exhaustive_threshold:
        idx = grid_indices(p, b)
        ei = ei_batch(model, _index_embedding(idx, b), best_observed)
        fresh = np.array([tuple(row) not in seen for row in idx])
        ei = np.where(fresh, ei, -np.inf)
        return PhaseConfig.from_indices(idx[int(np.argmax(ei))], b)

    starts = gen.uniform(0.0, 2 * math.pi, size=(search.restarts, p))
    if len(observed) == len(model.y_std):
        incumbent = observed[int(np.argmax(model.y_std))]
        starts = np.vstack([incumbent.angles[None, :], starts])
    final = _coordinate_ascent(model, best_observed, starts, search)
    idx = np.array([quantize_phases(a, b).indices for a in final], dtype=np.int64)
    idx = np.vstack([idx, _discrete_polish(model, best_observed, idx, b)])
    ei = ei_batch(model, _index_embedding(idx, b), best_observed)
    for i in np.argsort(-ei, kind="stable"):
        if tuple(idx[i]) not in seen:
            return PhaseConfig.from_indices(idx[i], b)
    return random_unobserved(gen, seen, p, b)


def random_unobserved(rng, seen: set, p: int, b: int, max_tries: int = 10000) -> PhaseConfig:
    gen = _as_generator(rng)
    total = (2**b) ** p
    if total <= len(seen):
        raise SearchExhaustedError(f"all {total} grid configurations have been observed")
    if total <= 4 * max(len(seen), 1) or total <= 4096:
        free = [row for row in grid_indices(p, b) if tuple(row) not in seen]
        return PhaseConfig.from_indices(free[int(gen.integers(len(free)))], b)
    for _ in range(max_tries):
        cand = gen.integers(0, 2**b, size=p)
        if tuple(cand) not in seen:
            return PhaseConfig.from_indices(cand, b)
    raise SearchExhaustedError("could not draw an unobserved configuration")
