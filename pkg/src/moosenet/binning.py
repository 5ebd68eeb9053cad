"""Equal-count MOS bins and the posterior-weighted expectation over them.

Bins are half-open ``[start, end)`` intervals covering ``[1, 5]``; the last one
is closed at 5. Interior edges sit halfway between adjacent distinct training
values, so a training value never straddles two bins.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .errors import NotNormalized, OutOfRange, TooFewDistinctValues, TooFewSamples

MOS_MIN = 1.0
MOS_MAX = 5.0


@dataclass(frozen=True)
class BinSpec:
    edges: tuple[float, ...]  # N + 1 values, edges[0] = 1, edges[-1] = 5
    counts: tuple[int, ...]

    @property
    def n_bins(self) -> int:
        return len(self.edges) - 1

    @property
    def starts(self) -> np.ndarray:
        return np.asarray(self.edges[:-1])

    @property
    def ends(self) -> np.ndarray:
        return np.asarray(self.edges[1:])

    @property
    def centers(self) -> np.ndarray:
        e = np.asarray(self.edges)
        return (e[:-1] + e[1:]) / 2.0

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["index", "start", "end", "center", "count"])
        for i, (s, e, c, n) in enumerate(zip(self.starts, self.ends, self.centers, self.counts)):
            w.writerow([i, repr(float(s)), repr(float(e)), repr(float(c)), n])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "BinSpec":
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or rows[0] != ["index", "start", "end", "center", "count"]:
            raise ValueError("bin table must start with header index,start,end,center,count")
        body = rows[1:]
        edges = [float(body[0][1])] + [float(r[2]) for r in body]
        return cls(tuple(edges), tuple(int(r[4]) for r in body))


def _partition_groups(counts, n_bins):
    """Split consecutive groups into ``n_bins`` contiguous runs, minimizing the
    squared deviation of run totals from the equal share. Returns run end indices."""
    k = len(counts)
    cum = np.concatenate([[0], np.cumsum(counts)])
    target = cum[-1] / n_bins
    inf = float("inf")
    # cost[b][j]: best cost to put groups[:j] into b runs
    cost = np.full((n_bins + 1, k + 1), inf)
    back = np.zeros((n_bins + 1, k + 1), dtype=int)
    cost[0, 0] = 0.0
    for b in range(1, n_bins + 1):
        # leave at least one group for each remaining run
        for j in range(b, k - (n_bins - b) + 1):
            i = np.arange(b - 1, j)
            cand = cost[b - 1, i] + (cum[j] - cum[i] - target) ** 2
            best = int(np.argmin(cand))
            cost[b, j] = cand[best]
            back[b, j] = i[best]
    ends = []
    j = k
    for b in range(n_bins, 0, -1):
        ends.append(j)
        j = back[b, j]
    return ends[::-1]


def fit_bins(mos_values, n_bins=32, min_count=5, strict=False) -> BinSpec:
    """Fit ``n_bins`` equal-count bins to MOS labels.

    ``min_count`` is the smallest allowed bin population (``strict`` requires
    strictly more than it).
    """
    v = np.asarray(mos_values, dtype=np.float64)
    if n_bins < 1:
        raise ValueError("n_bins must be >= 1")
    if v.size and (v.min() < MOS_MIN or v.max() > MOS_MAX):
        raise OutOfRange(f"MOS values must lie in [{MOS_MIN}, {MOS_MAX}]")
    need = n_bins * (min_count + 1 if strict else min_count)
    if v.size < max(need, n_bins):
        raise TooFewSamples(f"{v.size} samples cannot give {n_bins} bins of >= {min_count}")
    distinct, counts = np.unique(v, return_counts=True)
    if len(distinct) < n_bins:
        raise TooFewDistinctValues(f"{len(distinct)} distinct values for {n_bins} bins")
    ends = _partition_groups(counts, n_bins)
    edges = [MOS_MIN]
    bin_counts = []
    start = 0
    for j in ends:
        bin_counts.append(int(counts[start:j].sum()))
        if j < len(distinct):
            edges.append(float((distinct[j - 1] + distinct[j]) / 2.0))
        start = j
    edges.append(MOS_MAX)
    low = min(bin_counts)
    if low < min_count or (strict and low <= min_count):
        raise TooFewSamples(f"smallest bin holds {low} samples, need {'>' if strict else '>='} {min_count}")
    return BinSpec(tuple(edges), tuple(bin_counts))


def assign_bin(spec: BinSpec, mos) -> int:
    mos = float(mos)
    if not MOS_MIN <= mos <= MOS_MAX:
        raise OutOfRange(f"MOS {mos} outside [{MOS_MIN}, {MOS_MAX}]")
    idx = int(np.searchsorted(np.asarray(spec.edges), mos, side="right")) - 1
    return min(idx, spec.n_bins - 1)


def assign_bins(spec: BinSpec, mos_values) -> np.ndarray:
    return np.array([assign_bin(spec, m) for m in mos_values], dtype=int)


def expected_mos(spec: BinSpec, posterior) -> float:
    p = np.asarray(posterior, dtype=np.float64)
    if p.shape != (spec.n_bins,):
        raise ValueError(f"posterior has shape {p.shape}, expected ({spec.n_bins},)")
    if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
        raise NotNormalized(f"posterior must be non-negative and sum to 1 (sum={p.sum():.12g})")
    return float(np.clip(p @ spec.centers, spec.centers[0], spec.centers[-1]))
