"""Three-layer softmax MLP with hand-written backprop and Adam.

Every routine broadcasts over leading axes of the parameter arrays: a
weight of shape ``(G, fan_in, fan_out)`` holds ``G`` independent networks
that are evaluated and trained side by side on inputs of shape
``(G, batch, d_in)``. Single networks simply have no leading axis.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import expit

from .channel import ShapeError
from .numerics import _as_generator

ACTIVATIONS = ("sigmoid", "relu", "softmax")
PROB_FLOOR = 1e-300


class InvalidInputError(ValueError):
    pass


@dataclass
class MlpParams:
    """Weights ``[W1, W2, W3]`` and biases ``[b1, b2, b3]``."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activations: tuple[str, ...] = ACTIVATIONS

    @property
    def sizes(self) -> tuple[int, ...]:
        return (self.weights[0].shape[-2],) + tuple(w.shape[-1] for w in self.weights)

    @property
    def batch_shape(self) -> tuple[int, ...]:
        return self.weights[0].shape[:-2]

    def arrays(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    @classmethod
    def from_arrays(cls, arrays, activations=ACTIVATIONS) -> MlpParams:
        arrays = list(arrays)
        return cls(arrays[0::2], arrays[1::2], activations)

    def copy(self) -> MlpParams:
        return MlpParams.from_arrays([a.copy() for a in self.arrays()], self.activations)

    def select(self, index) -> MlpParams:
        """One network out of a stacked set."""
        return MlpParams.from_arrays([a[index].copy() for a in self.arrays()], self.activations)

    def to_json(self) -> dict:
        return {
            "sizes": list(self.sizes),
            "activations": list(self.activations),
            "layers": [
                {"weight": w.tolist(), "bias": b.tolist()} for w, b in zip(self.weights, self.biases)
            ],
        }

    @classmethod
    def from_json(cls, doc: dict) -> MlpParams:
        return cls(
            [np.asarray(layer["weight"], dtype=np.float64) for layer in doc["layers"]],
            [np.asarray(layer["bias"], dtype=np.float64) for layer in doc["layers"]],
            tuple(doc.get("activations", ACTIVATIONS)),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json()))

    @classmethod
    def load(cls, path) -> MlpParams:
        return cls.from_json(json.loads(Path(path).read_text()))


def stack_params(nets: list[MlpParams]) -> MlpParams:
    cols = zip(*(n.arrays() for n in nets))
    return MlpParams.from_arrays([np.stack(c) for c in cols], nets[0].activations)


def init_mlp(rng, d_in: int, m: int, hidden: tuple[int, int] = (60, 30),
             batch_shape: tuple[int, ...] = ()) -> MlpParams:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) init for weights and biases."""
    gen = _as_generator(rng)
    sizes = (d_in, *hidden, m)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = 1.0 / math.sqrt(fan_in)
        weights.append(gen.uniform(-bound, bound, size=(*batch_shape, fan_in, fan_out)))
        biases.append(gen.uniform(-bound, bound, size=(*batch_shape, fan_out)))
    return MlpParams(weights, biases)


def zeros_like_params(params: MlpParams) -> MlpParams:
    return MlpParams.from_arrays([np.zeros_like(a) for a in params.arrays()], params.activations)


_sigmoid = expit


def _softmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _forward_cache(params: MlpParams, x: np.ndarray):
    (w1, w2, w3), (b1, b2, b3) = params.weights, params.biases
    z1 = x @ w1 + b1[..., None, :]
    a1 = _sigmoid(z1)
    z2 = a1 @ w2 + b2[..., None, :]
    a2 = np.maximum(z2, 0.0)
    z3 = a2 @ w3 + b3[..., None, :]
    return a1, z2, a2, _softmax(z3)


def forward(params: MlpParams, x: np.ndarray) -> np.ndarray:
    """Class probabilities for a single input vector or a batch of rows."""
    x = np.asarray(x, dtype=np.float64)
    d_in = params.sizes[0]
    if x.shape[-1] != d_in:
        raise ShapeError(f"input has {x.shape[-1]} features, network expects {d_in}")
    if not np.all(np.isfinite(x)):
        raise InvalidInputError("network input contains non-finite values")
    if x.ndim == 1:
        return _forward_cache(params, x[None, :])[-1][0]
    return _forward_cache(params, x)[-1]


def cross_entropy_loss(probs, label: int) -> float:
    """``-log probs[label]``, with the probability floored at 1e-300."""
    return -math.log(max(float(probs[label]), PROB_FLOOR))


def mean_cross_entropy(params: MlpParams, x: np.ndarray, labels: np.ndarray) -> np.ndarray:
    p = forward(params, x)
    picked = np.take_along_axis(p, labels[..., None], axis=-1)[..., 0]
    return -np.log(np.maximum(picked, PROB_FLOOR)).mean(axis=-1)


def _one_hot(labels: np.ndarray, m: int) -> np.ndarray:
    return (labels[..., None] == np.arange(m)).astype(np.float64)


def backward(params: MlpParams, x: np.ndarray, labels: np.ndarray) -> tuple[MlpParams, np.ndarray]:
    """Gradient of the batch-mean cross-entropy, plus that loss."""
    x = np.asarray(x, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if x.ndim == 1:
        x, labels = x[None, :], labels.reshape(1)
    if x.shape[:-1] != labels.shape:
        raise ShapeError(f"inputs {x.shape} and labels {labels.shape} disagree")
    if x.shape[-2] == 0:
        raise InvalidInputError("empty batch")
    (w1, w2, w3) = params.weights
    a1, z2, a2, p = _forward_cache(params, x)
    batch = x.shape[-2]
    onehot = _one_hot(labels, p.shape[-1])
    loss = -np.log(np.maximum((p * onehot).sum(-1), PROB_FLOOR)).mean(-1)

    dz3 = (p - onehot) / batch
    dw3 = np.swapaxes(a2, -1, -2) @ dz3
    db3 = dz3.sum(-2)
    dz2 = (dz3 @ np.swapaxes(w3, -1, -2)) * (z2 > 0)
    dw2 = np.swapaxes(a1, -1, -2) @ dz2
    db2 = dz2.sum(-2)
    dz1 = (dz2 @ np.swapaxes(w2, -1, -2)) * a1 * (1.0 - a1)
    dw1 = np.swapaxes(x, -1, -2) @ dz1
    db1 = dz1.sum(-2)
    return MlpParams([dw1, dw2, dw3], [db1, db2, db3], params.activations), loss


def flatten(params: MlpParams) -> np.ndarray:
    return np.concatenate([a.ravel() for a in params.arrays()])


def _flat_views(params: MlpParams) -> tuple[np.ndarray, MlpParams]:
    """Copy ``params`` into one contiguous buffer and return views into it."""
    flat = flatten(params)
    arrays, offset = [], 0
    for a in params.arrays():
        arrays.append(flat[offset:offset + a.size].reshape(a.shape))
        offset += a.size
    return flat, MlpParams.from_arrays(arrays, params.activations)


@dataclass
class AdamState:
    """Moments over the flattened parameter vector."""

    m: np.ndarray
    v: np.ndarray
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: MlpParams, **kw) -> AdamState:
        size = sum(a.size for a in params.arrays())
        return cls(np.zeros(size), np.zeros(size), **kw)


def _adam_update(flat: np.ndarray, g: np.ndarray, state: AdamState, lr: float) -> None:
    state.step += 1
    t = state.step
    state.m *= state.beta1
    state.m += (1.0 - state.beta1) * g
    state.v *= state.beta2
    state.v += (1.0 - state.beta2) * (g * g)
    step_size = lr / (1.0 - state.beta1**t)
    denom = np.sqrt(state.v / (1.0 - state.beta2**t))
    denom += state.eps
    flat -= step_size * state.m / denom


def adam_step(params: MlpParams, grads: MlpParams, state: AdamState,
              lr: float = 0.01) -> tuple[MlpParams, AdamState]:
    """One bias-corrected Adam update; returns new params and the mutated state."""
    flat = flatten(params)
    _adam_update(flat, flatten(grads), state, lr)
    out, offset = [], 0
    for a in params.arrays():
        out.append(flat[offset:offset + a.size].reshape(a.shape))
        offset += a.size
    return MlpParams.from_arrays(out, params.activations), state


@dataclass
class TrainReport:
    initial_loss: np.ndarray
    final_loss: np.ndarray
    epoch_losses: list[np.ndarray] = field(default_factory=list)


def train(params: MlpParams, x: np.ndarray, labels: np.ndarray, epochs: int = 70,
          batch_size: int = 32, lr: float = 0.01, rng=None) -> tuple[MlpParams, TrainReport]:
    """Minibatch Adam on the mean cross-entropy; returns a trained copy.

    Stacked networks share one shuffle order per epoch.
    """
    x = np.asarray(x, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n = x.shape[-2]
    if n == 0:
        raise InvalidInputError("training set is empty")
    gen = _as_generator(rng) if rng is not None else np.random.default_rng(0)
    flat, params = _flat_views(params)
    state = AdamState.for_params(params)
    report = TrainReport(mean_cross_entropy(params, x, labels), None)
    for _ in range(epochs):
        order = gen.permutation(n)
        xs, ys = x[..., order, :], labels[..., order]
        total = 0.0
        for start in range(0, n, batch_size):
            xb, yb = xs[..., start:start + batch_size, :], ys[..., start:start + batch_size]
            grads, loss = backward(params, xb, yb)
            _adam_update(flat, flatten(grads), state, lr)
            total = total + loss * xb.shape[-2]
        report.epoch_losses.append(total / n)
    report.final_loss = mean_cross_entropy(params, x, labels)
    return params, report
