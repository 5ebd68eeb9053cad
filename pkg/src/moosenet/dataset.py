"""Manifest, ratings, embedding and audio ingestion.

File layouts
------------
manifest CSV   ``utt_id,system_id,split,embedding_path,audio_path,mos,duration_s``
ratings CSV    ``utt_id,listener_id,rating``
aux CSV        ``utt_id,stoi,mcd``
pairs CSV      ``utt_id,clean_audio_path,noisy_audio_path,clean_embedding_path,
               noisy_embedding_path,snr_db,noise_class,noise_class_name,
               volume_factor,tempo_factor``

Empty cells mean "absent". Relative paths resolve against the directory of the
CSV that names them.

MNEB embedding file: ``b"MNEB"``, u32 version (=1), u32 T, u32 D, then T*D
little-endian float32 values in row-major order.
"""
from __future__ import annotations

import csv
import math
import struct
import wave
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    BadMagic,
    DuplicateId,
    MalformedRow,
    MissingPath,
    NonFiniteValue,
    RatingOutOfRange,
    TruncatedFile,
    UnsupportedFormat,
)

MANIFEST_HEADER = ["utt_id", "system_id", "split", "embedding_path", "audio_path", "mos", "duration_s"]
RATINGS_HEADER = ["utt_id", "listener_id", "rating"]
AUX_HEADER = ["utt_id", "stoi", "mcd"]
PAIRS_HEADER = [
    "utt_id", "clean_audio_path", "noisy_audio_path", "clean_embedding_path",
    "noisy_embedding_path", "snr_db", "noise_class", "noise_class_name",
    "volume_factor", "tempo_factor",
]
SPLITS = ("train", "dev", "test")

EMB_MAGIC = b"MNEB"
EMB_VERSION = 1
_EMB_HEADER = struct.Struct("<4sIII")

DEFAULT_SAMPLE_RATE = 16000


@dataclass(frozen=True)
class AuxTargets:
    stoi: float | None = None
    mcd: float | None = None


@dataclass(frozen=True)
class UtteranceRecord:
    utt_id: str
    system_id: str
    split: str
    duration_s: float
    mos: float | None = None
    listener_ratings: tuple[tuple[str, int], ...] = ()
    aux_targets: AuxTargets | None = None
    embedding_path: Path | None = None
    audio_path: Path | None = None


@dataclass(frozen=True)
class EmbeddingSequence:
    utt_id: str
    data: np.ndarray = field(repr=False)

    @property
    def frames(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class AudioClip:
    samples: np.ndarray = field(repr=False)
    sample_rate: int = DEFAULT_SAMPLE_RATE

    def __len__(self):
        return len(self.samples)

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass(frozen=True)
class PairEntry:
    """One row of a pairs CSV: where the augmented variants of an utterance live."""

    utt_id: str
    snr_db: float
    noise_class: int
    noise_class_name: str
    clean_audio_path: Path | None = None
    noisy_audio_path: Path | None = None
    clean_embedding_path: Path | None = None
    noisy_embedding_path: Path | None = None
    volume_factor: float = 1.0
    tempo_factor: float = 1.0


def _read_rows(path, header):
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            first = next(reader)
        except StopIteration:
            raise MalformedRow(path, 1, "empty file, expected header") from None
        if [c.strip() for c in first] != header:
            raise MalformedRow(path, 1, f"header {first!r} does not match {','.join(header)}")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise MalformedRow(path, lineno, f"expected {len(header)} fields, got {len(row)}")
            yield lineno, dict(zip(header, (c.strip() for c in row)))


def _opt_float(path, lineno, name, text):
    if text == "":
        return None
    try:
        value = float(text)
    except ValueError:
        raise MalformedRow(path, lineno, f"{name}={text!r} is not a number") from None
    if not math.isfinite(value):
        raise MalformedRow(path, lineno, f"{name}={text!r} is not finite")
    return value


def _opt_path(base, path, lineno, text):
    if text == "":
        return None
    p = Path(text)
    if not p.is_absolute():
        p = base / p
    if not p.exists():
        raise MissingPath(f"{path}:{lineno}: {text} does not exist")
    return p


def load_ratings(path) -> dict[str, tuple[tuple[str, int], ...]]:
    path = Path(path)
    out: dict[str, list[tuple[str, int]]] = {}
    for lineno, row in _read_rows(path, RATINGS_HEADER):
        try:
            rating = int(row["rating"])
        except ValueError:
            raise MalformedRow(path, lineno, f"rating={row['rating']!r} is not an integer") from None
        if not 1 <= rating <= 5:
            raise RatingOutOfRange(f"{path}:{lineno}: rating {rating} outside 1..5")
        if not row["utt_id"] or not row["listener_id"]:
            raise MalformedRow(path, lineno, "utt_id and listener_id are required")
        out.setdefault(row["utt_id"], []).append((row["listener_id"], rating))
    return {k: tuple(v) for k, v in out.items()}


def load_aux_targets(path) -> dict[str, AuxTargets]:
    path = Path(path)
    out = {}
    for lineno, row in _read_rows(path, AUX_HEADER):
        stoi = _opt_float(path, lineno, "stoi", row["stoi"])
        mcd = _opt_float(path, lineno, "mcd", row["mcd"])
        if stoi is not None and not 0.0 <= stoi <= 1.0:
            raise MalformedRow(path, lineno, f"stoi={stoi} outside [0, 1]")
        if mcd is not None and mcd < 0:
            raise MalformedRow(path, lineno, f"mcd={mcd} is negative")
        if row["utt_id"] in out:
            raise DuplicateId(f"{path}:{lineno}: duplicate utt_id {row['utt_id']!r}")
        out[row["utt_id"]] = AuxTargets(stoi, mcd)
    return out


def load_manifest(path, ratings_path=None, aux_path=None) -> list[UtteranceRecord]:
    """Read a manifest CSV, optionally joining per-listener ratings and aux targets.

    Raises :class:`MalformedRow` (with line number), :class:`DuplicateId`,
    :class:`RatingOutOfRange` or :class:`MissingPath`.
    """
    path = Path(path)
    base = path.parent
    ratings = load_ratings(ratings_path) if ratings_path is not None else {}
    aux = load_aux_targets(aux_path) if aux_path is not None else {}

    records = []
    seen = set()
    for lineno, row in _read_rows(path, MANIFEST_HEADER):
        utt_id = row["utt_id"]
        if not utt_id or not row["system_id"]:
            raise MalformedRow(path, lineno, "utt_id and system_id are required")
        if utt_id in seen:
            raise DuplicateId(f"{path}:{lineno}: duplicate utt_id {utt_id!r}")
        seen.add(utt_id)
        if row["split"] not in SPLITS:
            raise MalformedRow(path, lineno, f"split={row['split']!r} not one of {SPLITS}")
        duration = _opt_float(path, lineno, "duration_s", row["duration_s"])
        if duration is None or duration <= 0:
            raise MalformedRow(path, lineno, "duration_s must be a positive number")
        mos = _opt_float(path, lineno, "mos", row["mos"])
        if mos is not None and not 1.0 <= mos <= 5.0:
            raise MalformedRow(path, lineno, f"mos={mos} outside [1, 5]")
        utt_ratings = ratings.get(utt_id, ())
        if utt_ratings and mos is not None:
            mean = sum(r for _, r in utt_ratings) / len(utt_ratings)
            if abs(mean - mos) > 1e-6:
                raise MalformedRow(
                    path, lineno, f"mos={mos} disagrees with mean listener rating {mean:.6f}"
                )
        records.append(
            UtteranceRecord(
                utt_id=utt_id,
                system_id=row["system_id"],
                split=row["split"],
                duration_s=duration,
                mos=mos,
                listener_ratings=utt_ratings,
                aux_targets=aux.get(utt_id),
                embedding_path=_opt_path(base, path, lineno, row["embedding_path"]),
                audio_path=_opt_path(base, path, lineno, row["audio_path"]),
            )
        )
    return records


def write_manifest(path, records) -> None:
    """Write records back to manifest CSV (ratings and aux targets are not included)."""
    path = Path(path)
    base = path.parent.resolve()

    def rel(p):
        if p is None:
            return ""
        p = Path(p).resolve()
        try:
            return str(p.relative_to(base))
        except ValueError:
            return str(p)

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MANIFEST_HEADER)
        for r in records:
            w.writerow([
                r.utt_id, r.system_id, r.split, rel(r.embedding_path), rel(r.audio_path),
                "" if r.mos is None else repr(float(r.mos)), repr(float(r.duration_s)),
            ])


def split_view(records, split) -> list[UtteranceRecord]:
    if split not in SPLITS:
        raise ValueError(f"unknown split {split!r}")
    return [r for r in records if r.split == split]


def load_pairs(path) -> dict[str, PairEntry]:
    path = Path(path)
    base = path.parent
    out = {}
    for lineno, row in _read_rows(path, PAIRS_HEADER):
        snr = _opt_float(path, lineno, "snr_db", row["snr_db"])
        if snr is None:
            raise MalformedRow(path, lineno, "snr_db is required")
        try:
            noise_class = int(row["noise_class"])
        except ValueError:
            raise MalformedRow(path, lineno, f"noise_class={row['noise_class']!r} is not an integer") from None
        if row["utt_id"] in out:
            raise DuplicateId(f"{path}:{lineno}: duplicate utt_id {row['utt_id']!r}")
        vol = _opt_float(path, lineno, "volume_factor", row["volume_factor"])
        tempo = _opt_float(path, lineno, "tempo_factor", row["tempo_factor"])
        out[row["utt_id"]] = PairEntry(
            utt_id=row["utt_id"],
            snr_db=snr,
            noise_class=noise_class,
            noise_class_name=row["noise_class_name"],
            clean_audio_path=_opt_path(base, path, lineno, row["clean_audio_path"]),
            noisy_audio_path=_opt_path(base, path, lineno, row["noisy_audio_path"]),
            clean_embedding_path=_opt_path(base, path, lineno, row["clean_embedding_path"]),
            noisy_embedding_path=_opt_path(base, path, lineno, row["noisy_embedding_path"]),
            volume_factor=1.0 if vol is None else vol,
            tempo_factor=1.0 if tempo is None else tempo,
        )
    return out


def write_pairs(path, entries) -> None:
    path = Path(path)
    base = path.parent.resolve()

    def rel(p):
        if p is None:
            return ""
        p = Path(p).resolve()
        try:
            return str(p.relative_to(base))
        except ValueError:
            return str(p)

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PAIRS_HEADER)
        for e in entries:
            w.writerow([
                e.utt_id, rel(e.clean_audio_path), rel(e.noisy_audio_path),
                rel(e.clean_embedding_path), rel(e.noisy_embedding_path),
                repr(float(e.snr_db)), e.noise_class, e.noise_class_name,
                repr(float(e.volume_factor)), repr(float(e.tempo_factor)),
            ])


def save_embedding(path, data, utt_id=None) -> None:
    data = np.asarray(data)
    if data.ndim != 2 or data.shape[0] < 1 or data.shape[1] < 1:
        raise ValueError(f"embedding must be a non-empty T x D matrix, got shape {data.shape}")
    payload = np.ascontiguousarray(data, dtype="<f4")
    if not np.all(np.isfinite(payload)):
        raise NonFiniteValue(f"embedding for {utt_id or path} contains non-finite values")
    with open(path, "wb") as fh:
        fh.write(_EMB_HEADER.pack(EMB_MAGIC, EMB_VERSION, data.shape[0], data.shape[1]))
        fh.write(payload.tobytes())


def load_embedding(path, utt_id=None) -> EmbeddingSequence:
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < 4 or raw[:4] != EMB_MAGIC:
        raise BadMagic(f"{path}: not an MNEB embedding file")
    if len(raw) < _EMB_HEADER.size:
        raise TruncatedFile(f"{path}: header truncated")
    _, version, t, d = _EMB_HEADER.unpack_from(raw)
    if version != EMB_VERSION:
        raise BadMagic(f"{path}: unsupported MNEB version {version}")
    if t < 1 or d < 1:
        raise TruncatedFile(f"{path}: header declares empty matrix {t}x{d}")
    need = _EMB_HEADER.size + 4 * t * d
    if len(raw) < need:
        raise TruncatedFile(f"{path}: expected {need} bytes, found {len(raw)}")
    data = np.frombuffer(raw, dtype="<f4", count=t * d, offset=_EMB_HEADER.size).reshape(t, d)
    if not np.all(np.isfinite(data)):
        raise NonFiniteValue(f"{path}: embedding contains NaN or Inf")
    return EmbeddingSequence(utt_id or path.stem, data.astype(np.float32))


def load_audio(path) -> AudioClip:
    """Read a 16-bit PCM mono WAV into samples scaled by 1/32768."""
    path = Path(path)
    try:
        with wave.open(str(path), "rb") as wf:
            if wf.getnchannels() != 1:
                raise UnsupportedFormat(f"{path}: {wf.getnchannels()} channels, expected mono")
            if wf.getsampwidth() != 2:
                raise UnsupportedFormat(f"{path}: {8 * wf.getsampwidth()}-bit samples, expected 16-bit")
            if wf.getcomptype() != "NONE":
                raise UnsupportedFormat(f"{path}: compressed WAV ({wf.getcomptype()})")
            rate = wf.getframerate()
            frames = wf.readframes(wf.getnframes())
    except (wave.Error, EOFError) as exc:
        raise UnsupportedFormat(f"{path}: {exc}") from None
    samples = np.frombuffer(frames, dtype="<i2").astype(np.float64) / 32768.0
    return AudioClip(samples, rate)


def save_audio(path, clip: AudioClip) -> None:
    ints = np.clip(np.round(np.asarray(clip.samples) * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(clip.sample_rate)
        wf.writeframes(ints.tobytes())
