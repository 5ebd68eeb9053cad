"""Synthetic stand-ins for encoder features, ratings and audio."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import (
    AudioClip,
    AuxTargets,
    PairEntry,
    UtteranceRecord,
    save_audio,
    save_embedding,
    write_manifest,
    write_pairs,
)


@dataclass(frozen=True)
class SyntheticPaths:
    root: Path
    manifest: Path
    pairs: Path | None
    aux: Path | None


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


def make_synthetic_dataset(root, n_train=500, n_dev=100, n_test=0, dim=16, n_systems=10,
                           seed=0, noise_classes=("babble", "music", "hum"), frame_rate=10.0,
                           mos_noise=0.1, system_spread=0.6, with_pairs=True) -> SyntheticPaths:
    """Write a learnable dataset: MOS is a squashed affine function of the pooled
    embedding plus Gaussian noise.

    Frames are N(offset_s, I) with a per-system offset along one direction, so
    systems differ in average quality. Noisy twins add a class-specific offset
    whose size shrinks with SNR.
    """
    root = Path(root)
    (root / "emb").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    direction = rng.normal(size=dim)
    direction /= np.linalg.norm(direction)
    weights = rng.normal(size=dim)
    weights = weights / np.linalg.norm(weights) + direction
    levels = np.linspace(-1.0, 1.0, n_systems)
    rng.shuffle(levels)
    noise_dirs = rng.normal(size=(len(noise_classes), dim))

    splits = ["train"] * n_train + ["dev"] * n_dev + ["test"] * n_test
    items = []
    for i in range(len(splits)):
        s = i % n_systems
        dur = float(np.round(rng.uniform(1.0, 12.0), 3))
        t = max(1, int(round(dur * frame_rate)))
        frames = rng.normal(size=(t, dim)) + system_spread * levels[s] * direction
        items.append((s, dur, frames))
    proj = np.array([weights @ (f.max(axis=0) + f.mean(axis=0)) for _, _, f in items])
    logits = (proj - np.median(proj)) / proj.std() * 1.5

    records, pairs = [], []
    for i, (split, (s, dur, frames)) in enumerate(zip(splits, items)):
        utt = f"u{i:05d}"
        mos = float(np.clip(1.0 + 4.0 * _sigmoid(logits[i]) + rng.normal(0.0, mos_noise), 1.0, 5.0))
        emb = root / "emb" / f"{utt}.mneb"
        save_embedding(emb, frames)
        aux = None
        if with_pairs:
            snr = float(rng.uniform(10.0, 20.0))
            c = int(rng.integers(0, len(noise_classes)))
            scale = 3.0 * 10.0 ** (-(snr - 10.0) / 20.0)
            noisy = frames + scale * noise_dirs[c] + 0.1 * rng.normal(size=frames.shape)
            nemb = root / "emb" / f"{utt}.noisy.mneb"
            save_embedding(nemb, noisy)
            pairs.append(PairEntry(utt, snr, c, noise_classes[c], noisy_embedding_path=nemb))
            aux = AuxTargets(stoi=float(np.round(_sigmoid((snr - 12.0) / 3.0), 6)))
        records.append(UtteranceRecord(utt, f"sys{s:02d}", split, dur, float(np.round(mos, 6)),
                                       aux_targets=aux, embedding_path=emb))
    manifest = root / "manifest.csv"
    write_manifest(manifest, records)
    pairs_path = aux_path = None
    if with_pairs:
        pairs_path = root / "pairs.csv"
        write_pairs(pairs_path, pairs)
        aux_path = root / "aux.csv"
        with open(aux_path, "w") as fh:
            fh.write("utt_id,stoi,mcd\n")
            for r in records:
                fh.write(f"{r.utt_id},{r.aux_targets.stoi!r},\n")
    return SyntheticPaths(root, manifest, pairs_path, aux_path)


def make_rated_records(n_utts=200, n_systems=10, n_raters=8, rater_noise=0.8, seed=0,
                       split="test") -> list[UtteranceRecord]:
    """Utterances rated by ``n_raters`` listeners around a latent per-system quality."""
    rng = np.random.default_rng(seed)
    quality = rng.uniform(1.5, 4.5, n_systems)
    out = []
    for i in range(n_utts):
        s = i % n_systems
        latent = quality[s] + rng.normal(0.0, 0.3)
        ratings = np.clip(np.round(latent + rng.normal(0.0, rater_noise, n_raters)), 1, 5).astype(int)
        out.append(UtteranceRecord(
            f"r{i:05d}", f"sys{s:02d}", split, 3.0, float(ratings.mean()),
            listener_ratings=tuple((f"L{j}", int(x)) for j, x in enumerate(ratings)),
        ))
    return out


def write_ratings(path, records) -> None:
    with open(path, "w") as fh:
        fh.write("utt_id,listener_id,rating\n")
        for r in records:
            for lid, x in r.listener_ratings:
                fh.write(f"{r.utt_id},{lid},{x}\n")


def bvcc_like_mos(per_value=(5, 40), seed=0, n_raters=8) -> np.ndarray:
    """MOS labels on the 33-value grid of 8-rater means, each value present >= per_value[0] times."""
    rng = np.random.default_rng(seed)
    grid = 1.0 + np.arange(4 * n_raters + 1) / n_raters
    # more mass around 3, as for rater means
    weight = np.exp(-0.5 * ((grid - 3.0) / 0.9) ** 2)
    lo, hi = per_value
    counts = np.round(lo + (hi - lo) * weight).astype(int)
    return np.repeat(grid, counts)


def tone(n, freq=220.0, sample_rate=16000, amp=0.3) -> AudioClip:
    t = np.arange(n) / sample_rate
    return AudioClip(amp * np.sin(2 * np.pi * freq * t), sample_rate)


def write_audio_fixture(root, n_utts=4, n_noises=3, seed=0, sample_rate=16000):
    """Tiny WAV corpus plus a noise table; returns (manifest, noise_table) paths."""
    root = Path(root)
    (root / "wav").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    records = []
    for i in range(n_utts):
        n = int(sample_rate * rng.uniform(1.0, 2.0))
        clip = tone(n, 150.0 + 50 * i, sample_rate)
        p = root / "wav" / f"a{i}.wav"
        save_audio(p, clip)
        records.append(UtteranceRecord(f"a{i}", f"sys{i % 2}", "train", n / sample_rate, 3.0, audio_path=p))
    manifest = root / "manifest.csv"
    write_manifest(manifest, records)
    table = root / "noise.csv"
    names = ["white", "hum"]
    with open(table, "w") as fh:
        fh.write("noise_id,noise_class_name,audio_path\n")
        for j in range(n_noises):
            n = int(sample_rate * rng.uniform(0.5, 3.0))
            if j % 2 == 0:
                clip = AudioClip(np.clip(rng.normal(0, 0.2, n), -1, 1), sample_rate)
            else:
                clip = tone(n, 50.0, sample_rate, 0.2)
            p = root / "wav" / f"noise{j}.wav"
            save_audio(p, clip)
            fh.write(f"n{j},{names[j % 2]},wav/noise{j}.wav\n")
    return manifest, table
