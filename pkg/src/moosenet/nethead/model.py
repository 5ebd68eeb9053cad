"""Pooled feed-forward head with per-task projections and optional listener table.

Layout of ``PredictorHead.params`` (``Din = D + E`` when a listener table is
present, else ``D``)::

    W1 (Din, H)   b1 (H,)          shared hidden layer, ReLU
    w_mu (H,)     b_mu (1,)        MOS mean
    w_lv (H,)     b_lv (1,)        MOS log-variance
    w_stoi (H,)   b_stoi (1,)      STOI regression
    w_snr (H,)    b_snr (1,)       SNR regression (dB)
    W_noise (H, C) b_noise (C,)    noise-class logits
    listener_table (L + 1, E)      row 0 is UNK

MNCK checkpoint: ``b"MNCK"``, u32 version, u32 D, H, C, L, E (E = 0 means no
listener table), the arrays above in that order as little-endian float32,
then C noise-class names and L listener ids, each a u32 byte length followed
by UTF-8 bytes.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..dataset import EmbeddingSequence
from ..errors import BadMagic, DimensionMismatch, EmptySequence, TruncatedFile

HIDDEN_DIM = 32
LISTENER_DIM = 32

PARAM_ORDER = (
    "W1", "b1", "w_mu", "b_mu", "w_lv", "b_lv", "w_stoi", "b_stoi",
    "w_snr", "b_snr", "W_noise", "b_noise", "listener_table",
)

CKPT_MAGIC = b"MNCK"
CKPT_VERSION = 1
_CKPT_HEADER = struct.Struct("<4sIIIIII")


def pool(emb) -> np.ndarray:
    """Max-pool plus mean-pool over frames, summed into one D-vector."""
    data = emb.data if isinstance(emb, EmbeddingSequence) else np.asarray(emb)
    if data.ndim != 2 or data.shape[0] < 1:
        raise EmptySequence("pooling needs at least one frame")
    x = data.astype(np.float64)
    return x.max(axis=0) + x.mean(axis=0)


@dataclass
class PredictorHead:
    params: dict[str, np.ndarray]
    noise_classes: tuple[str, ...] = ("noise",)
    listeners: tuple[str, ...] = ()
    _rows: dict[str, int] = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        self._rows = {name: i + 1 for i, name in enumerate(self.listeners)}

    @property
    def input_dim(self) -> int:
        return self.params["W1"].shape[0] - self.listener_dim

    @property
    def hidden_dim(self) -> int:
        return self.params["W1"].shape[1]

    @property
    def n_noise_classes(self) -> int:
        return self.params["W_noise"].shape[1]

    @property
    def has_listener_table(self) -> bool:
        return "listener_table" in self.params

    @property
    def listener_dim(self) -> int:
        t = self.params.get("listener_table")
        return 0 if t is None else t.shape[1]

    def listener_rows(self, listener_ids) -> np.ndarray:
        """Map listener ids to table rows; unknown ids and None go to UNK (row 0)."""
        return np.array([self._rows.get(l, 0) if l is not None else 0 for l in listener_ids], dtype=int)

    def copy(self) -> "PredictorHead":
        return PredictorHead({k: v.copy() for k, v in self.params.items()},
                             self.noise_classes, self.listeners)

    def astype(self, dtype) -> "PredictorHead":
        return PredictorHead({k: v.astype(dtype) for k, v in self.params.items()},
                             self.noise_classes, self.listeners)


def init_head(input_dim, rng, hidden_dim=HIDDEN_DIM, noise_classes=("noise",), listeners=None,
              listener_dim=LISTENER_DIM, mos_bias=3.0, snr_bias=15.0, stoi_bias=0.5,
              dtype=np.float32) -> PredictorHead:
    """Random head. ``listeners=None`` disables the listener table; an empty
    sequence keeps only the UNK row."""
    e = 0 if listeners is None else listener_dim
    din = input_dim + e
    h, c = hidden_dim, len(noise_classes)
    s = 1.0 / np.sqrt(h)
    p = {
        "W1": rng.normal(0.0, np.sqrt(2.0 / din), (din, h)),
        "b1": np.zeros(h),
        "w_mu": rng.normal(0.0, s, h), "b_mu": np.array([mos_bias]),
        "w_lv": rng.normal(0.0, 0.1 * s, h), "b_lv": np.zeros(1),
        "w_stoi": rng.normal(0.0, s, h), "b_stoi": np.array([stoi_bias]),
        "w_snr": rng.normal(0.0, s, h), "b_snr": np.array([snr_bias]),
        "W_noise": rng.normal(0.0, s, (h, c)), "b_noise": np.zeros(c),
    }
    if listeners is not None:
        p["listener_table"] = rng.normal(0.0, 1.0, (len(listeners) + 1, e))
    return PredictorHead({k: v.astype(dtype) for k, v in p.items()},
                         tuple(noise_classes), tuple(listeners or ()))


@dataclass
class HeadOutputs:
    mos_mean: np.ndarray
    mos_logvar: np.ndarray
    stoi: np.ndarray
    snr: np.ndarray
    noise_logits: np.ndarray
    hidden: np.ndarray
    # kept for backprop
    inputs: np.ndarray = field(repr=False, default=None)
    preact: np.ndarray = field(repr=False, default=None)
    rows: np.ndarray | None = field(repr=False, default=None)


def forward(head: PredictorHead, pooled, listeners=None, rows=None) -> HeadOutputs:
    """Run the head on a batch (B, D) or a single D-vector.

    ``listeners`` is a sequence of listener ids (None for UNK); alternatively
    pass precomputed table ``rows``. Ignored when the head has no table.
    """
    p = {k: v.astype(np.float64, copy=False) for k, v in head.params.items()}
    x = np.asarray(pooled, dtype=np.float64)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[1] != head.input_dim:
        raise DimensionMismatch(f"head expects {head.input_dim}-dim input, got {x.shape[1]}")
    if head.has_listener_table:
        if rows is None:
            rows = head.listener_rows(listeners if listeners is not None else [None] * len(x))
        rows = np.asarray(rows, dtype=int)
        x = np.concatenate([x, p["listener_table"][rows]], axis=1)
    elif listeners is not None and any(l is not None for l in listeners):
        raise DimensionMismatch("listener ids given but the head has no listener table")
    a = x @ p["W1"] + p["b1"]
    h = np.maximum(a, 0.0)
    out = HeadOutputs(
        mos_mean=h @ p["w_mu"] + p["b_mu"][0],
        mos_logvar=h @ p["w_lv"] + p["b_lv"][0],
        stoi=h @ p["w_stoi"] + p["b_stoi"][0],
        snr=h @ p["w_snr"] + p["b_snr"][0],
        noise_logits=h @ p["W_noise"] + p["b_noise"],
        hidden=h,
        inputs=x,
        preact=a,
        rows=rows,
    )
    if single:
        out.mos_mean, out.mos_logvar = out.mos_mean[0], out.mos_logvar[0]
        out.stoi, out.snr = out.stoi[0], out.snr[0]
        out.noise_logits, out.hidden = out.noise_logits[0], out.hidden[0]
    return out


def _write_str(fh, s):
    b = s.encode("utf-8")
    fh.write(struct.pack("<I", len(b)))
    fh.write(b)


def save_checkpoint(head: PredictorHead, path) -> None:
    L = len(head.listeners)
    E = head.listener_dim
    with open(path, "wb") as fh:
        fh.write(_CKPT_HEADER.pack(CKPT_MAGIC, CKPT_VERSION, head.input_dim, head.hidden_dim,
                                   head.n_noise_classes, L, E))
        for name in PARAM_ORDER:
            if name in head.params:
                fh.write(np.ascontiguousarray(head.params[name], dtype="<f4").tobytes())
        for s in head.noise_classes:
            _write_str(fh, s)
        for s in head.listeners:
            _write_str(fh, s)


def load_checkpoint(path) -> PredictorHead:
    path = Path(path)
    raw = path.read_bytes()
    if raw[:4] != CKPT_MAGIC:
        raise BadMagic(f"{path}: not an MNCK checkpoint")
    if len(raw) < _CKPT_HEADER.size:
        raise TruncatedFile(f"{path}: header truncated")
    _, version, D, H, C, L, E = _CKPT_HEADER.unpack_from(raw)
    if version != CKPT_VERSION:
        raise BadMagic(f"{path}: checkpoint version {version}, this build reads {CKPT_VERSION}")
    din = D + E
    shapes = {
        "W1": (din, H), "b1": (H,), "w_mu": (H,), "b_mu": (1,), "w_lv": (H,), "b_lv": (1,),
        "w_stoi": (H,), "b_stoi": (1,), "w_snr": (H,), "b_snr": (1,),
        "W_noise": (H, C), "b_noise": (C,),
    }
    if E:
        shapes["listener_table"] = (L + 1, E)
    off = _CKPT_HEADER.size
    params = {}
    for name in PARAM_ORDER:
        if name not in shapes:
            continue
        n = int(np.prod(shapes[name]))
        if off + 4 * n > len(raw):
            raise TruncatedFile(f"{path}: truncated while reading {name}")
        params[name] = np.frombuffer(raw, "<f4", n, off).reshape(shapes[name]).astype(np.float32)
        off += 4 * n

    def read_str():
        nonlocal off
        if off + 4 > len(raw):
            raise TruncatedFile(f"{path}: truncated string table")
        (n,) = struct.unpack_from("<I", raw, off)
        off += 4
        if off + n > len(raw):
            raise TruncatedFile(f"{path}: truncated string table")
        s = raw[off:off + n].decode("utf-8")
        off += n
        return s

    classes = tuple(read_str() for _ in range(C))
    listeners = tuple(read_str() for _ in range(L))
    return PredictorHead(params, classes, listeners)
