"""Tunable knobs for each pipeline stage, as they appear in the farm config.

The config file carries optional ``preprocess``, ``training`` and ``monitor``
sections whose keys are the field names below.
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field

from .errors import ConfigError

SEED_ENV_VAR = "SENTINEL_SEED"


def default_seed() -> int:
    raw = os.environ.get(SEED_ENV_VAR)
    if raw is None or raw == "":
        return 0
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"{SEED_ENV_VAR} must be an integer, got {raw!r}") from None


@dataclass(frozen=True)
class PreprocessSettings:
    band: float = 4.0
    bin_width: float = 0.5
    cut_out: float = 25.0
    min_bin_samples: int = 10
    k: int = 8
    c: float = 3.0
    min_cluster_fraction: float = 0.02
    low_load_threshold: float = 0.2
    max_gap: int = 3
    min_train_rows: int = 1000

    def __post_init__(self):
        if self.band <= 0 or self.bin_width <= 0 or self.cut_out <= 0:
            raise ConfigError("preprocess: band, bin_width and cut_out must be positive")
        if self.k < 1:
            raise ConfigError("preprocess: k must be >= 1")
        if self.c <= 0:
            raise ConfigError("preprocess: c must be positive")
        if not 0 <= self.min_cluster_fraction < 1:
            raise ConfigError("preprocess: min_cluster_fraction must be in [0, 1)")
        if not 0 < self.low_load_threshold < 1:
            raise ConfigError("preprocess: low_load_threshold must be in (0, 1)")
        if self.max_gap < 0:
            raise ConfigError("preprocess: max_gap must be >= 0")
        if self.min_train_rows < 1:
            raise ConfigError("preprocess: min_train_rows must be >= 1")


@dataclass(frozen=True)
class TrainSettings:
    epochs: int = 200
    batch_size: int = 64
    learning_rate: float = 1e-3
    momentum: float = 0.9
    decay_every: int = 80
    patience: int = 20
    validation_fraction: float = 0.15
    seed: int = field(default_factory=default_seed)
    hidden: int | None = None
    bottleneck: int | None = None

    def __post_init__(self):
        if self.epochs < 0:
            raise ConfigError("training: epochs must be >= 0")
        if self.batch_size < 1 or self.decay_every < 1 or self.patience < 1:
            raise ConfigError("training: batch_size, decay_every and patience must be positive")
        if self.learning_rate <= 0 or not 0 <= self.momentum < 1:
            raise ConfigError("training: learning_rate must be > 0 and momentum in [0, 1)")
        if not 0 < self.validation_fraction < 0.5:
            raise ConfigError("training: validation_fraction must be in (0, 0.5)")


@dataclass(frozen=True)
class MonitorSettings:
    window: int = 432
    min_window: int | None = None
    alphas: tuple[float, float] = (0.95, 0.99)
    thresholds: tuple[float, float, float] = (0.92, 0.85, 0.75)
    persistence: int = 3
    recovery: int = 144
    ridge: float = 1e-6

    def __post_init__(self):
        object.__setattr__(self, "alphas", tuple(float(a) for a in self.alphas))
        object.__setattr__(self, "thresholds", tuple(float(t) for t in self.thresholds))
        if self.window < 1:
            raise ConfigError("monitor: window must be >= 1")
        if self.min_window is not None and not 1 <= self.min_window <= self.window:
            raise ConfigError("monitor: min_window must be in [1, window]")
        a1, a2 = self.alphas
        if not 0 < a1 < a2 < 1:
            raise ConfigError("monitor: alphas must satisfy 0 < a1 < a2 < 1")
        t1, t2, t3 = self.thresholds
        if not 1 > t1 > t2 > t3 > 0:
            raise ConfigError("monitor: thresholds must satisfy 1 > t1 > t2 > t3 > 0")
        if self.persistence < 1 or self.recovery < 1:
            raise ConfigError("monitor: persistence and recovery must be >= 1")
        if self.ridge < 0:
            raise ConfigError("monitor: ridge must be >= 0")

    @property
    def effective_min_window(self) -> int:
        return self.min_window if self.min_window is not None else max(1, self.window // 2)


def settings_from_mapping(cls, raw, section):
    if raw is None:
        return cls()
    if not isinstance(raw, dict):
        raise ConfigError(f"{section}: expected a mapping")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"{section}: unknown keys {sorted(unknown)}")
    try:
        return cls(**raw)
    except TypeError as exc:
        raise ConfigError(f"{section}: {exc}") from None


def settings_to_mapping(obj) -> dict:
    out = {}
    for f in dataclasses.fields(obj):
        v = getattr(obj, f.name)
        out[f.name] = list(v) if isinstance(v, tuple) else v
    return out
