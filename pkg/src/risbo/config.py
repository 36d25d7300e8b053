"""Experiment configuration: nested dataclasses, presets, JSON parsing."""

from __future__ import annotations

import copy
import json
from dataclasses import asdict, dataclass, field, fields, is_dataclass, replace
from pathlib import Path
from typing import Any

from .deepsic import TrainingConfig
from .gp import SearchConfig
from .modem import Modulation


class ConfigError(ValueError):
    """Base class for configuration problems."""


class ConfigFileError(ConfigError):
    pass


class ConfigSyntaxError(ConfigError):
    pass


class ConfigValidationError(ConfigError):
    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


@dataclass(frozen=True)
class Dims:
    k: int = 3
    n: int = 3
    p: int = 8
    b: int = 2


@dataclass(frozen=True)
class ChannelConfig:
    kappa: float = 10.0
    beta: float = 1.0
    gamma: float = 1.0


@dataclass(frozen=True)
class BoConfig:
    n_bo: int = 15
    snr_db: float = 0.0
    lengthscale: float = 1.0
    jitter: float = 1e-10
    obs_noise: float = 1e-6
    search: SearchConfig = field(default_factory=SearchConfig)


@dataclass(frozen=True)
class EvalConfig:
    snr_db: tuple[float, ...] = (-6.0, -3.0, 0.0, 3.0, 6.0)
    n_test_bits: int = 100_000
    n_val_bits: int = 10_000
    seeds: tuple[int, ...] = (0,)
    fig4a_mode: str = "reuse"
    map_oracle: bool = True
    optimize_ris: bool = True


@dataclass(frozen=True)
class ExperimentConfig:
    dims: Dims = field(default_factory=Dims)
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    modulation: str = "qpsk"
    training: TrainingConfig = field(default_factory=TrainingConfig)
    bo: BoConfig = field(default_factory=BoConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    seed: int = 0
    out_dir: str = "runs"

    def to_json(self) -> dict:
        return _plain(asdict(self))

    def with_overrides(self, overrides: dict) -> ExperimentConfig:
        return from_dict(_deep_merge(self.to_json(), overrides))


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


# `desk` runs in minutes; `paper` is the full-size published parameter set.
# The BO SNR of the desk preset puts the first-iteration BER near 5e-2.
# Lengthscales grow like sqrt(P): two independent random configurations sit
# at squared distance 2P on average, and the kernel between them is kept at
# exp(-2P / (2 * 6.25 * P / 8)) ~ 0.28 for both presets instead of decaying
# to nothing as P grows.
PRESETS: dict[str, dict] = {
    "desk": {
        "bo": {"snr_db": -6.0, "lengthscale": 2.5},
        "eval": {"snr_db": [-9.0, -6.0, -3.0, 0.0]},
    },
    "paper": {
        "dims": {"k": 5, "n": 5, "p": 18, "b": 2},
        "training": {"n_tr": 1000, "q": 5, "lr": 0.01},
        "bo": {"n_bo": 25, "snr_db": -8.0, "lengthscale": 3.75},
        "eval": {"n_test_bits": 160_000, "snr_db": [-8.0, -6.0, -4.0, -2.0, 0.0]},
    },
}


def _deep_merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in over.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def _build(cls, doc: Any, path: str):
    if not isinstance(doc, dict):
        raise ConfigValidationError(path or "<root>", f"expected an object, got {type(doc).__name__}")
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(doc) - set(known))
    if unknown:
        raise ConfigValidationError(f"{path}.{unknown[0]}".lstrip("."), "unknown key")
    defaults = cls()
    kwargs = {}
    for name, value in doc.items():
        sub = f"{path}.{name}".lstrip(".")
        default = getattr(defaults, name)
        if is_dataclass(default):
            kwargs[name] = _build(type(default), value, sub)
        elif isinstance(default, tuple):
            if not isinstance(value, (list, tuple)):
                raise ConfigValidationError(sub, "expected an array")
            kwargs[name] = tuple(value)
        elif isinstance(default, bool):
            if not isinstance(value, bool):
                raise ConfigValidationError(sub, "expected a boolean")
            kwargs[name] = value
        elif isinstance(default, int):
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConfigValidationError(sub, "expected an integer")
            kwargs[name] = value
        elif isinstance(default, float):
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigValidationError(sub, "expected a number")
            kwargs[name] = float(value)
        else:
            if not isinstance(value, type(default)):
                raise ConfigValidationError(sub, f"expected {type(default).__name__}")
            kwargs[name] = value
    return replace(defaults, **kwargs)


def _check(cond: bool, path: str, message: str) -> None:
    if not cond:
        raise ConfigValidationError(path, message)


def validate(cfg: ExperimentConfig) -> ExperimentConfig:
    d = cfg.dims
    for name in ("k", "n", "p", "b"):
        _check(getattr(d, name) >= 1, f"dims.{name}", "must be >= 1")
    _check(cfg.channel.kappa >= 0, "channel.kappa", "must be >= 0")
    _check(cfg.channel.beta > 0, "channel.beta", "must be > 0")
    _check(cfg.channel.gamma > 0, "channel.gamma", "must be > 0")
    _check(cfg.modulation in {m.value for m in Modulation}, "modulation", "must be 'bpsk' or 'qpsk'")
    t = cfg.training
    _check(t.n_tr >= 1, "training.n_tr", "must be >= 1")
    _check(t.q >= 1, "training.q", "must be >= 1")
    _check(t.lr > 0, "training.lr", "must be > 0")
    _check(t.epochs >= 1, "training.epochs", "must be >= 1")
    _check(t.batch_size >= 1, "training.batch_size", "must be >= 1")
    _check(len(t.hidden) == 2 and all(h >= 1 for h in t.hidden), "training.hidden",
           "must be two positive layer widths")
    bo = cfg.bo
    _check(bo.n_bo >= 2, "bo.n_bo", "must be >= 2")
    _check(bo.lengthscale > 0, "bo.lengthscale", "must be > 0")
    _check(bo.jitter >= 0, "bo.jitter", "must be >= 0")
    _check(bo.obs_noise >= 0, "bo.obs_noise", "must be >= 0")
    _check(bo.search.restarts >= 1, "bo.search.restarts", "must be >= 1")
    _check(bo.search.sweeps >= 1, "bo.search.sweeps", "must be >= 1")
    _check(bo.search.scan_points >= 2, "bo.search.scan_points", "must be >= 2")
    _check(bo.search.golden_iters >= 0, "bo.search.golden_iters", "must be >= 0")
    _check(bo.search.exhaustive_threshold >= 0, "bo.search.exhaustive_threshold", "must be >= 0")
    e = cfg.eval
    _check(len(e.snr_db) >= 1, "eval.snr_db", "must contain at least one SNR point")
    _check(all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in e.snr_db),
           "eval.snr_db", "entries must be numbers")
    _check(e.n_test_bits >= 1, "eval.n_test_bits", "must be >= 1")
    _check(e.n_val_bits >= 1, "eval.n_val_bits", "must be >= 1")
    _check(len(e.seeds) >= 1, "eval.seeds", "must contain at least one seed")
    _check(all(isinstance(v, int) and v >= 0 for v in e.seeds), "eval.seeds",
           "entries must be non-negative integers")
    _check(e.fig4a_mode in ("reuse", "per_snr"), "eval.fig4a_mode", "must be 'reuse' or 'per_snr'")
    _check(0 <= cfg.seed < 2**64, "seed", "must be an unsigned 64-bit integer")
    return cfg


def from_dict(doc: dict) -> ExperimentConfig:
    cfg = validate(_build(ExperimentConfig, doc, ""))
    return replace(cfg, eval=replace(cfg.eval, snr_db=tuple(float(v) for v in cfg.eval.snr_db)))


def parse_config(path: str | Path | None = None, preset: str | None = None,
                 overrides: dict | None = None) -> ExperimentConfig:
    """Build a validated config: preset, then file contents, then overrides.

    A file may name its own base with a top-level ``"preset"`` key.
    """
    doc: dict = {}
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigFileError(f"config file not found: {p}")
        try:
            doc = json.loads(p.read_text())
        except json.JSONDecodeError as err:
            raise ConfigSyntaxError(f"{p}: malformed JSON ({err})") from err
        if not isinstance(doc, dict):
            raise ConfigSyntaxError(f"{p}: top level must be an object")
    preset = preset or doc.pop("preset", None) or "desk"
    doc.pop("preset", None)
    if preset not in PRESETS:
        raise ConfigValidationError("preset", f"unknown preset {preset!r}")
    merged = _deep_merge(ExperimentConfig().to_json(), PRESETS[preset])
    merged = _deep_merge(merged, doc)
    merged = _deep_merge(merged, overrides or {})
    return from_dict(merged)
