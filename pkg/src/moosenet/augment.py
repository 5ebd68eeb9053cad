"""Time-domain augmentation: volume, tempo and additive noise at a target SNR.

Every random draw goes through an explicit ``numpy.random.Generator`` so a
seed fully determines the output.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset import AudioClip, load_audio
from .errors import EmptyClip, MalformedRow, SilentClean, SilentNoise

TEMPO_MIN = 0.9
TEMPO_MAX = 1.08
TEMPO_STEP = 0.001

NOISE_TABLE_HEADER = ["noise_id", "noise_class_name", "audio_path"]


def tempo_grid(lo=TEMPO_MIN, hi=TEMPO_MAX, step=TEMPO_STEP) -> np.ndarray:
    n = int(round((hi - lo) / step)) + 1
    return np.round(lo + step * np.arange(n), 6)


@dataclass(frozen=True)
class NoiseEntry:
    noise_id: str
    noise_class: int
    audio: AudioClip
    class_names: tuple[str, ...] = ()

    def __post_init__(self):
        if len(self.audio) == 0:
            raise EmptyClip(f"noise {self.noise_id!r} has no samples")
        if self.class_names and not 0 <= self.noise_class < len(self.class_names):
            raise ValueError(f"noise class {self.noise_class} outside table of {len(self.class_names)}")

    @property
    def class_name(self) -> str:
        return self.class_names[self.noise_class] if self.class_names else str(self.noise_class)


@dataclass(frozen=True)
class AugmentedPair:
    clean: AudioClip
    noisy: AudioClip
    snr_db: float
    noise_class: int
    noise: np.ndarray = field(repr=False)  # scaled noise actually added, pre-clamp
    volume_factor: float = 1.0
    tempo_factor: float = 1.0


@dataclass(frozen=True)
class AugmentConfig:
    volume_prob: float = 0.8
    volume_range: tuple[float, float] = (0.5, 2.0)
    tempo_factors: tuple[float, ...] = tuple(tempo_grid())
    snr_range: tuple[float, float] = (10.0, 20.0)
    # forced values bypass sampling; useful for previews and tests
    tempo_factor: float | None = None
    snr_db: float | None = None


def load_noise_table(path) -> list[NoiseEntry]:
    """Read ``noise_id,noise_class_name,audio_path``; class indices follow first appearance."""
    path = Path(path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or [c.strip() for c in rows[0]] != NOISE_TABLE_HEADER:
        raise MalformedRow(path, 1, f"expected header {','.join(NOISE_TABLE_HEADER)}")
    parsed = []
    names: list[str] = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != 3:
            raise MalformedRow(path, lineno, f"expected 3 fields, got {len(row)}")
        noise_id, cls, audio = (c.strip() for c in row)
        if cls not in names:
            names.append(cls)
        p = Path(audio)
        if not p.is_absolute():
            p = path.parent / p
        parsed.append((noise_id, names.index(cls), p))
    table = tuple(names)
    return [NoiseEntry(nid, idx, load_audio(p), table) for nid, idx, p in parsed]


def apply_volume(clip: AudioClip, factor=None, rng=None, prob=1.0,
                 factor_range=(0.5, 2.0)) -> AudioClip:
    """Scale by ``factor`` with probability ``prob``, clamping to [-1, 1].

    When ``factor`` is None it is drawn uniformly from ``factor_range``.
    """
    if not 0.0 <= prob <= 1.0:
        raise ValueError(f"prob must lie in [0, 1], got {prob}")
    if prob == 0.0:
        return clip
    if prob < 1.0:
        if rng is None:
            raise ValueError("rng is required when prob < 1")
        if rng.random() >= prob:
            return clip
    if factor is None:
        if rng is None:
            raise ValueError("rng is required when factor is not given")
        factor = rng.uniform(*factor_range)
    out = np.clip(np.asarray(clip.samples, dtype=np.float64) * factor, -1.0, 1.0)
    return AudioClip(out, clip.sample_rate)


def apply_tempo(clip: AudioClip, factor: float) -> AudioClip:
    """Speed change by linear-interpolation resampling; output has round(n / factor) samples."""
    x = np.asarray(clip.samples, dtype=np.float64)
    n = len(x)
    if n == 0:
        raise EmptyClip("cannot change tempo of an empty clip")
    if factor <= 0:
        raise ValueError(f"tempo factor must be positive, got {factor}")
    if factor == 1.0:
        return AudioClip(x.copy(), clip.sample_rate)
    n_out = max(1, int(round(n / factor)))
    pos = np.arange(n_out) * factor
    return AudioClip(np.interp(pos, np.arange(n), x), clip.sample_rate)


def power(x) -> float:
    x = np.asarray(x, dtype=np.float64)
    return float(np.mean(x * x))


def noise_gain(p_clean, p_noise, snr_db) -> float:
    return float(np.sqrt(p_clean / (p_noise * 10.0 ** (snr_db / 10.0))))


def mix_noise(clean: AudioClip, noise: NoiseEntry, snr_db: float, rng) -> AugmentedPair:
    x = np.asarray(clean.samples, dtype=np.float64)
    n = len(x)
    p_clean = power(x) if n else 0.0
    if p_clean == 0.0:
        raise SilentClean("clean clip has zero power")
    src = np.asarray(noise.audio.samples, dtype=np.float64)
    if len(src) >= n:
        offset = int(rng.integers(0, len(src) - n + 1))
        seg = src[offset:offset + n]
    else:
        offset = int(rng.integers(0, len(src)))
        seg = src[(offset + np.arange(n)) % len(src)]
    p_noise = power(seg)
    if p_noise == 0.0:
        raise SilentNoise(f"noise segment from {noise.noise_id!r} has zero power")
    scaled = noise_gain(p_clean, p_noise, snr_db) * seg
    noisy = np.clip(x + scaled, -1.0, 1.0)
    return AugmentedPair(
        clean=AudioClip(x, clean.sample_rate),
        noisy=AudioClip(noisy, clean.sample_rate),
        snr_db=float(snr_db),
        noise_class=noise.noise_class,
        noise=scaled,
    )


def realized_snr(pair: AugmentedPair) -> float:
    return 10.0 * np.log10(power(pair.clean.samples) / power(pair.noise))


def make_training_pair(clip: AudioClip, noise_table, config: AugmentConfig, rng) -> AugmentedPair:
    """Perturb volume and tempo of ``clip``, then add one random noise.

    Both variants share the volume/tempo perturbation, so they differ only by
    the additive noise.
    """
    if not noise_table:
        raise ValueError("noise table is empty")
    vol = 1.0
    if rng.random() < config.volume_prob:
        vol = float(rng.uniform(*config.volume_range))
        clip = apply_volume(clip, vol)
    if config.tempo_factor is not None:
        tempo = float(config.tempo_factor)
    else:
        tempo = float(config.tempo_factors[int(rng.integers(0, len(config.tempo_factors)))])
    clip = apply_tempo(clip, tempo)
    noise = noise_table[int(rng.integers(0, len(noise_table)))]
    snr = float(config.snr_db) if config.snr_db is not None else float(rng.uniform(*config.snr_range))
    pair = mix_noise(clip, noise, snr, rng)
    return AugmentedPair(pair.clean, pair.noisy, pair.snr_db, pair.noise_class, pair.noise,
                         volume_factor=vol, tempo_factor=tempo)


def make_record_pair(record, noise_table, config: AugmentConfig, rng) -> AugmentedPair:
    if record.audio_path is None:
        raise ValueError(f"record {record.utt_id!r} has no audio_path")
    return make_training_pair(load_audio(record.audio_path), noise_table, config, rng)
