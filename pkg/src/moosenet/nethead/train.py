"""Training data assembly and the epoch loop with early stopping."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from ..batching import draw_batches, filter_by_duration, make_buckets
from ..dataset import load_embedding
from ..errors import DegenerateInput, DimensionMismatch, NonFiniteLoss
from ..metrics import PredictionSet, evaluate
from .losses import BatchTargets, loss_total
from .model import PredictorHead, forward, pool
from .optim import LambState, lamb_step, noam_lr

log = logging.getLogger(__name__)

LOG_COLUMNS = [
    "epoch", "steps", "lr", "loss", "loss_mos", "loss_contrast", "loss_stoi", "loss_snr",
    "loss_noise", "dev_mse", "dev_srcc", "best_srcc", "best_epoch",
]


@dataclass
class HeadData:
    """Pooled features and targets for one split.

    ``noisy`` rows align with ``records``; a NaN row means no noisy variant.
    STOI targets describe the noisy variant.
    """

    records: list
    clean: np.ndarray
    noisy: np.ndarray | None = None
    snr: np.ndarray | None = None
    noise_class: np.ndarray | None = None
    stoi: np.ndarray | None = None
    index: dict[str, int] = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self):
        self.index = {r.utt_id: i for i, r in enumerate(self.records)}
        n = len(self.records)
        if self.snr is None:
            self.snr = np.full(n, np.nan)
        if self.noise_class is None:
            self.noise_class = -np.ones(n, dtype=int)
        if self.stoi is None:
            self.stoi = np.full(n, np.nan)

    @property
    def mos(self) -> np.ndarray:
        return np.array([np.nan if r.mos is None else r.mos for r in self.records])

    @property
    def has_noisy(self) -> bool:
        return self.noisy is not None and bool(np.all(np.isfinite(self.noisy)))


def build_head_data(records, pairs=None, noise_classes=None) -> HeadData:
    """Load and pool embeddings for ``records``; ``pairs`` maps utt_id to a PairEntry."""
    records = list(records)
    clean = []
    for r in records:
        path = r.embedding_path
        if pairs and r.utt_id in pairs and pairs[r.utt_id].clean_embedding_path is not None:
            path = pairs[r.utt_id].clean_embedding_path
        if path is None:
            raise ValueError(f"record {r.utt_id!r} has no embedding_path")
        clean.append(pool(load_embedding(path, r.utt_id)))
        if clean[-1].shape != clean[0].shape:
            raise DimensionMismatch(
                f"{r.utt_id}: embedding dim {clean[-1].shape[0]} differs from {clean[0].shape[0]}")
    data = HeadData(records, np.array(clean))
    if pairs:
        noisy = np.full_like(data.clean, np.nan)
        names = list(noise_classes or sorted({p.noise_class_name for p in pairs.values()}))
        for i, r in enumerate(records):
            p = pairs.get(r.utt_id)
            if p is None or p.noisy_embedding_path is None:
                continue
            v = pool(load_embedding(p.noisy_embedding_path, r.utt_id))
            if v.shape != noisy[i].shape:
                raise DimensionMismatch(f"{r.utt_id}: noisy embedding dim {v.shape[0]} differs from clean")
            noisy[i] = v
            data.snr[i] = p.snr_db
            data.noise_class[i] = names.index(p.noise_class_name) if p.noise_class_name in names else p.noise_class
        data.noisy = noisy if np.isfinite(noisy).all(axis=1).any() else None
    for i, r in enumerate(records):
        if r.aux_targets is not None and r.aux_targets.stoi is not None:
            data.stoi[i] = r.aux_targets.stoi
    return data


def predict(head: PredictorHead, data: HeadData, model_id="head") -> PredictionSet:
    out = forward(head, data.clean, listeners=[None] * len(data.records))
    preds = {r.utt_id: float(m) for r, m in zip(data.records, out.mos_mean)}
    var = {r.utt_id: float(np.exp(v)) for r, v in zip(data.records, out.mos_logvar)}
    return PredictionSet(preds, model_id, var, {r.utt_id: r.system_id for r in data.records})


def assemble_batch(head: PredictorHead, data: HeadData, batch, listener_dependent=False):
    """Stack features and targets for the items of one batch.

    In listener-dependent mode each clean utterance expands to one item per
    listener rating plus one UNK item trained on the MOS.
    """
    xs, mos, noisy, stoi, snr, cls, rows = [], [], [], [], [], [], []

    def add(x, m, is_noisy, st, sn, c, row):
        xs.append(x); mos.append(m); noisy.append(is_noisy)
        stoi.append(st); snr.append(sn); cls.append(c); rows.append(row)

    for utt, variant in batch.items:
        i = data.index[utt]
        r = data.records[i]
        if variant == "clean":
            m = np.nan if r.mos is None else r.mos
            add(data.clean[i], m, False, np.nan, np.nan, -1, 0)
            if listener_dependent:
                for lid, rating in r.listener_ratings:
                    add(data.clean[i], float(rating), False, np.nan, np.nan, -1,
                        int(head.listener_rows([lid])[0]))
        else:
            if data.noisy is None or not np.all(np.isfinite(data.noisy[i])):
                continue
            add(data.noisy[i], np.nan, True, data.stoi[i], data.snr[i], int(data.noise_class[i]), 0)
    targets = BatchTargets(
        np.array(mos), np.array(noisy, dtype=bool), np.array(stoi), np.array(snr),
        np.array(cls, dtype=int), np.array(rows, dtype=int) if head.has_listener_table else None,
    )
    return np.array(xs), targets


class EarlyStopper:
    """Tracks the best score; ``update`` returns True once ``patience`` epochs pass without a strict improvement."""

    def __init__(self, patience):
        self.patience = patience
        self.best = -math.inf
        self.best_epoch = 0
        self.since = 0

    def update(self, score, epoch) -> bool:
        if score is not None and math.isfinite(score) and score > self.best:
            self.best = score
            self.best_epoch = epoch
            self.since = 0
            return False
        self.since += 1
        return self.since >= self.patience


def dev_score(head, dev: HeadData, level):
    pset = predict(head, dev)
    try:
        rep = evaluate(pset, dev.records, level)
    except DegenerateInput:
        return float("nan"), float("nan")
    return rep.mse, rep.srcc


def epoch_seed(seed, epoch) -> int:
    return int(np.random.SeedSequence([seed, epoch]).generate_state(1)[0])


def train(head: PredictorHead, train_data: HeadData, dev_data: HeadData, config, seed=None):
    """Train ``head`` in place and return ``(best_head, log_rows)``.

    ``config`` is a :class:`moosenet.config.RunConfig`. The best head is a copy
    taken at the epoch with the highest dev SRCC.
    """
    seed = config.seed if seed is None else seed
    loss_cfg = config.loss
    keep = filter_by_duration(train_data.records, config.min_duration, config.max_duration)
    if not keep or not dev_data.records:
        raise ValueError("train and dev splits must be non-empty")
    buckets = make_buckets(keep, min(config.n_buckets, len(keep)))
    paired = train_data.noisy is not None
    state = LambState()
    stopper = EarlyStopper(config.patience)
    best = head.copy()
    rows = []
    for epoch in range(1, config.max_epochs + 1):
        batches = draw_batches(buckets, epoch_seed(seed, epoch), config.clean_budget, paired=paired)
        sums = {"loss": 0.0, "mos": 0.0, "contrast": 0.0, "stoi": 0.0, "snr": 0.0, "noise": 0.0}
        lr = 0.0
        for b_i, batch in enumerate(batches):
            x, targets = assemble_batch(head, train_data, batch, config.listener_dependent)
            total, grads, parts = loss_total(head, x, targets, loss_cfg)
            if not math.isfinite(total) or not all(np.all(np.isfinite(g)) for g in grads.values()):
                raise NonFiniteLoss(
                    f"epoch {epoch} batch {b_i}: non-finite loss {total} on {batch.utt_ids[:5]}..."
                )
            lr = noam_lr(state.step + 1, config.base_lr, config.warmup)
            lamb_step(head.params, grads, state, lr, config.weight_decay)
            sums["loss"] += total
            for k, v in parts.items():
                sums[k] += v
        nb = max(1, len(batches))
        d_mse, d_srcc = dev_score(head, dev_data, config.early_stop_level)
        stop = stopper.update(d_srcc, epoch)
        if stopper.best_epoch == epoch:
            best = head.copy()
        rows.append({
            "epoch": epoch, "steps": state.step, "lr": lr,
            "loss": sums["loss"] / nb, "loss_mos": sums["mos"] / nb,
            "loss_contrast": sums["contrast"] / nb, "loss_stoi": sums["stoi"] / nb,
            "loss_snr": sums["snr"] / nb, "loss_noise": sums["noise"] / nb,
            "dev_mse": d_mse, "dev_srcc": d_srcc,
            "best_srcc": stopper.best, "best_epoch": stopper.best_epoch,
        })
        log.info("epoch %d loss %.4f dev srcc %.4f", epoch, rows[-1]["loss"], d_srcc)
        if stop:
            break
    return best, rows


def format_log(rows) -> str:
    def fmt(v):
        return repr(float(v)) if isinstance(v, float) else str(v)

    lines = [",".join(LOG_COLUMNS)]
    lines += [",".join(fmt(r[c]) for c in LOG_COLUMNS) for r in rows]
    return "\n".join(lines) + "\n"
