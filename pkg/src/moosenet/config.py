"""Run configuration: one flat dataclass, a ``key = value`` file format, overrides."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

from .augment import AugmentConfig, tempo_grid
from .errors import ConfigError
from .nethead.losses import LossConfig, LossWeights


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    # optimization
    base_lr: float = 1e-3
    warmup: int = 1500
    weight_decay: float = 1e-4
    patience: int = 30
    max_epochs: int = 90
    early_stop_level: str = "system"
    # model
    hidden: int = 32
    listener_dependent: bool = False
    listener_dim: int = 32
    # losses
    mos_loss: str = "gauss"
    tau: float = 0.25
    aux_tau: float = 0.0
    margin: float = 0.1
    w_mos: float = 1.0
    w_contrast: float = 0.5
    w_stoi: float = 0.1
    w_snr: float = 0.1
    w_noise: float = 0.1
    # binning / plda
    n_bins: int = 32
    min_count: int = 5
    # augmentation
    volume_prob: float = 0.8
    volume_min: float = 0.5
    volume_max: float = 2.0
    tempo_min: float = 0.9
    tempo_max: float = 1.08
    tempo_step: float = 0.001
    snr_min: float = 10.0
    snr_max: float = 20.0
    # batching
    min_duration: float = 1.0
    max_duration: float = 12.0
    clean_budget: float = 40.0
    n_buckets: int = 20

    def __post_init__(self):
        checks = [
            (self.base_lr > 0, "base_lr must be > 0"),
            (self.warmup >= 1, "warmup must be >= 1"),
            (self.weight_decay >= 0, "weight_decay must be >= 0"),
            (self.patience >= 1, "patience must be >= 1"),
            (self.max_epochs >= 1, "max_epochs must be >= 1"),
            (self.early_stop_level in ("utterance", "system"), "early_stop_level: utterance|system"),
            (self.hidden >= 1, "hidden must be >= 1"),
            (self.listener_dim >= 1, "listener_dim must be >= 1"),
            (self.mos_loss in ("gauss", "logcosh"), "mos_loss: gauss|logcosh"),
            (self.tau >= 0 and self.aux_tau >= 0, "tau and aux_tau must be >= 0"),
            (self.margin >= 0, "margin must be >= 0"),
            (self.w_mos > 0, "w_mos must be > 0"),
            (min(self.w_contrast, self.w_stoi, self.w_snr, self.w_noise) >= 0, "loss weights must be >= 0"),
            (self.n_bins >= 1 and self.min_count >= 1, "n_bins and min_count must be >= 1"),
            (0 <= self.volume_prob <= 1, "volume_prob must lie in [0, 1]"),
            (0 < self.volume_min <= self.volume_max, "need 0 < volume_min <= volume_max"),
            (0 < self.tempo_min <= self.tempo_max and self.tempo_step > 0, "bad tempo grid"),
            (self.snr_min <= self.snr_max, "need snr_min <= snr_max"),
            (0 < self.min_duration <= self.max_duration, "need 0 < min_duration <= max_duration"),
            (self.clean_budget >= self.max_duration, "clean_budget must cover max_duration"),
            (self.n_buckets >= 1, "n_buckets must be >= 1"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)

    @property
    def loss(self) -> LossConfig:
        return LossConfig(
            mos_loss=self.mos_loss, tau=self.tau, aux_tau=self.aux_tau, margin=self.margin,
            weights=LossWeights(self.w_mos, self.w_contrast, self.w_stoi, self.w_snr, self.w_noise),
        )

    @property
    def augment(self) -> AugmentConfig:
        return AugmentConfig(
            volume_prob=self.volume_prob,
            volume_range=(self.volume_min, self.volume_max),
            tempo_factors=tuple(tempo_grid(self.tempo_min, self.tempo_max, self.tempo_step)),
            snr_range=(self.snr_min, self.snr_max),
        )

    def replace(self, **kw) -> "RunConfig":
        return dataclasses.replace(self, **kw)

    def to_text(self) -> str:
        return "".join(f"{f.name} = {getattr(self, f.name)}\n" for f in dataclasses.fields(self))


def _coerce(name, typ, text):
    text = text.strip()
    try:
        if typ == "bool":
            low = text.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError
            return low in ("true", "1", "yes")
        if typ == "int":
            return int(text)
        if typ == "float":
            return float(text)
        return text
    except ValueError:
        raise ConfigError(f"{name}: cannot parse {text!r} as {typ}") from None


def apply_overrides(config: RunConfig, pairs) -> RunConfig:
    """Apply ``key=value`` strings (or ``(key, value)`` tuples) to a config."""
    types = {f.name: f.type for f in dataclasses.fields(RunConfig)}
    updates = {}
    for item in pairs:
        if isinstance(item, str):
            if "=" not in item:
                raise ConfigError(f"override {item!r} is not key=value")
            key, value = item.split("=", 1)
        else:
            key, value = item
        key = key.strip()
        if key not in types:
            raise ConfigError(f"unknown config key {key!r}")
        updates[key] = _coerce(key, types[key], str(value))
    return config.replace(**updates)


def load_config(path, overrides=()) -> RunConfig:
    pairs = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        key, value = line.split("=", 1)
        pairs.append((key, value))
    return apply_overrides(apply_overrides(RunConfig(), pairs), overrides)
