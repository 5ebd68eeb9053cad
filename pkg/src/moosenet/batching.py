"""Duration filtering, quantile bucketing and budgeted batch packing."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import TooFewRecords, UtteranceTooLong

MIN_DURATION_S = 1.0
MAX_DURATION_S = 12.0
CLEAN_BUDGET_S = 40.0
N_BUCKETS = 20


@dataclass(frozen=True)
class Bucket:
    index: int
    min_dur: float
    max_dur: float  # exclusive
    members: tuple[str, ...]
    durations: tuple[float, ...]


@dataclass(frozen=True)
class Batch:
    items: tuple[tuple[str, str], ...]  # (utt_id, "clean" | "noisy")
    clean_duration_s: float
    total_duration_s: float
    bucket: int

    @property
    def utt_ids(self) -> list[str]:
        return [u for u, v in self.items if v == "clean"]


def filter_by_duration(records, lo=MIN_DURATION_S, hi=MAX_DURATION_S):
    """Keep records with ``lo <= duration_s <= hi``; both bounds inclusive."""
    return [r for r in records if lo <= r.duration_s <= hi]


def make_buckets(records, n_buckets=N_BUCKETS) -> list[Bucket]:
    records = list(records)
    if len(records) < n_buckets:
        raise TooFewRecords(f"{len(records)} records cannot fill {n_buckets} buckets")
    ordered = sorted(records, key=lambda r: (r.duration_s, r.utt_id))
    buckets = []
    for i, group in enumerate(np.array_split(np.arange(len(ordered)), n_buckets)):
        members = [ordered[j] for j in group]
        durs = tuple(float(r.duration_s) for r in members)
        buckets.append(Bucket(
            index=i,
            min_dur=durs[0],
            max_dur=float(np.nextafter(durs[-1], np.inf)),
            members=tuple(r.utt_id for r in members),
            durations=durs,
        ))
    return buckets


def _pack(ids, durs, budget, paired, bucket):
    batches = []
    cur: list[str] = []
    cur_dur = 0.0

    def flush():
        items = []
        for u in cur:
            items.append((u, "clean"))
            if paired:
                items.append((u, "noisy"))
        batches.append(Batch(tuple(items), cur_dur, cur_dur * (2 if paired else 1), bucket))

    for u, d in zip(ids, durs):
        if d > budget:
            raise UtteranceTooLong(f"{u} lasts {d:.2f} s, over the {budget:.0f} s batch budget")
        if cur and cur_dur + d > budget:
            flush()
            cur, cur_dur = [], 0.0
        cur.append(u)
        cur_dur += d
    if cur:
        flush()
    return batches


def draw_batches(buckets, epoch_seed, clean_budget=CLEAN_BUDGET_S, paired=True) -> list[Batch]:
    """One epoch of batches; a deterministic function of ``epoch_seed``.

    Buckets are visited in shuffled order; inside each, members are shuffled
    and packed greedily until the next clean utterance would exceed the budget.
    The trailing underfull batch of a bucket is kept.
    """
    rng = np.random.default_rng(epoch_seed)
    out = []
    for bi in rng.permutation(len(buckets)):
        b = buckets[bi]
        perm = rng.permutation(len(b.members))
        out.extend(_pack([b.members[i] for i in perm], [b.durations[i] for i in perm],
                         clean_budget, paired, b.index))
    return out
