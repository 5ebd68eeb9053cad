"""Utterance/system-level evaluation, ensembling and annotator subsampling."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from .errors import (
    DegenerateInput,
    EmptyInput,
    KeyMismatch,
    LengthMismatch,
    MalformedRow,
    MissingRecord,
    NotEnoughRatings,
    TooFewMembers,
)

PREDICTIONS_HEADER = ["utt_id", "system_id", "mos_pred", "variance_pred"]
LEVELS = ("utterance", "system")


def _pair(x, y, min_len=1):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise LengthMismatch(f"lengths differ: {x.shape} vs {y.shape}")
    if x.size < min_len:
        raise EmptyInput(f"need at least {min_len} items, got {x.size}")
    return x, y


def _check_varied(x, y):
    if np.all(x == x[0]) or np.all(y == y[0]):
        raise DegenerateInput("correlation undefined for a constant sequence")


def mse(preds, targets) -> float:
    p, t = _pair(preds, targets)
    return float(np.mean((p - t) ** 2))


def pcc(x, y) -> float:
    x, y = _pair(x, y, 2)
    _check_varied(x, y)
    xc = x - x.mean()
    yc = y - y.mean()
    r = float(xc @ yc / math.sqrt((xc @ xc) * (yc @ yc)))
    return max(-1.0, min(1.0, r))


def srcc(x, y) -> float:
    """Spearman correlation: Pearson correlation of tie-averaged ranks."""
    x, y = _pair(x, y, 2)
    _check_varied(x, y)
    return pcc(stats.rankdata(x), stats.rankdata(y))


def ktau(x, y) -> float:
    """Kendall tau-b."""
    x, y = _pair(x, y, 2)
    _check_varied(x, y)
    return float(stats.kendalltau(x, y, variant="b").statistic)


@dataclass(frozen=True)
class EvalReport:
    level: str
    mse: float
    srcc: float
    pcc: float
    ktau: float
    n: int

    def text(self) -> str:
        return (f"{self.level}-level  n={self.n}  MSE={self.mse:.4f}  SRCC={self.srcc:.4f}  "
                f"PCC={self.pcc:.4f}  KTAU={self.ktau:.4f}")


@dataclass
class PredictionSet:
    preds: dict[str, float]
    model_id: str = ""
    variances: dict[str, float] | None = None
    systems: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        for k, v in self.preds.items():
            if not math.isfinite(v):
                raise ValueError(f"prediction for {k!r} is not finite")


def write_predictions(path, pset: PredictionSet, records=None) -> None:
    systems = dict(pset.systems)
    if records is not None:
        systems.update({r.utt_id: r.system_id for r in records})
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PREDICTIONS_HEADER)
        for u, p in pset.preds.items():
            var = "" if not pset.variances or u not in pset.variances else repr(float(pset.variances[u]))
            w.writerow([u, systems.get(u, ""), repr(float(p)), var])


def read_predictions(path, model_id=None) -> PredictionSet:
    path = Path(path)
    preds, variances, systems = {}, {}, {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != PREDICTIONS_HEADER:
            raise MalformedRow(path, 1, f"expected header {','.join(PREDICTIONS_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise MalformedRow(path, lineno, f"expected 4 fields, got {len(row)}")
            u, s, p, v = row
            if u in preds:
                raise KeyMismatch(f"{path}:{lineno}: duplicate utt_id {u!r}")
            try:
                preds[u] = float(p)
                if v:
                    variances[u] = float(v)
            except ValueError:
                raise MalformedRow(path, lineno, "mos_pred/variance_pred must be numeric") from None
            if s:
                systems[u] = s
    return PredictionSet(preds, model_id or path.stem, variances or None, systems)


def system_aggregate(pset: PredictionSet, records):
    """Per-system means of predictions and of true MOS.

    Returns ``(system_ids, pred_means, true_means)`` sorted by system id.
    """
    by_id = {r.utt_id: r for r in records}
    sums: dict[str, list[float]] = {}
    for u, p in pset.preds.items():
        r = by_id.get(u)
        if r is None or r.mos is None:
            raise MissingRecord(f"no record with a MOS label for prediction {u!r}")
        acc = sums.setdefault(r.system_id, [0.0, 0.0, 0])
        acc[0] += p
        acc[1] += r.mos
        acc[2] += 1
    systems = sorted(sums)
    pred = np.array([sums[s][0] / sums[s][2] for s in systems])
    true = np.array([sums[s][1] / sums[s][2] for s in systems])
    return systems, pred, true


def _aligned(pset, records, level):
    if level == "system":
        _, p, t = system_aggregate(pset, records)
        return p, t
    if level != "utterance":
        raise ValueError(f"level must be one of {LEVELS}")
    by_id = {r.utt_id: r for r in records}
    keys = sorted(pset.preds)
    for u in keys:
        if u not in by_id or by_id[u].mos is None:
            raise MissingRecord(f"no record with a MOS label for prediction {u!r}")
    return np.array([pset.preds[u] for u in keys]), np.array([by_id[u].mos for u in keys])


def evaluate(pset: PredictionSet, records, level="system") -> EvalReport:
    p, t = _aligned(pset, records, level)
    return EvalReport(level, mse(p, t), srcc(p, t), pcc(p, t), ktau(p, t), len(p))


def ensemble(sets, model_id="ensemble") -> PredictionSet:
    """Per-utterance mean of member predictions.

    When every member carries variances, the result holds the variance of the
    equal-weight mixture.
    """
    sets = list(sets)
    if not sets:
        raise TooFewMembers("ensemble of zero members")
    keys = set(sets[0].preds)
    for s in sets[1:]:
        if set(s.preds) != keys:
            raise KeyMismatch(f"member {s.model_id!r} covers different utterances")
    order = list(sets[0].preds)
    preds = {u: float(np.mean([s.preds[u] for s in sets])) for u in order}
    variances = None
    if all(s.variances and set(s.variances) >= keys for s in sets):
        variances = {}
        for u in order:
            mu = np.array([s.preds[u] for s in sets])
            var = np.array([s.variances[u] for s in sets])
            variances[u] = float(np.mean(var + mu * mu) - preds[u] ** 2)
        if len(sets) == 1:
            variances = dict(sets[0].variances)
    systems = {}
    for s in sets:
        systems.update(s.systems)
    return PredictionSet(preds, model_id, variances, systems)


def leave_one_out_ensembles(sets) -> list[PredictionSet]:
    """All k ensembles that each omit one of the k members."""
    sets = list(sets)
    if len(sets) < 2:
        raise TooFewMembers(f"leave-one-out needs at least 2 members, got {len(sets)}")
    return [ensemble(sets[:i] + sets[i + 1:], model_id=f"loo-{i}") for i in range(len(sets))]


def metric_spread(sets, records, metric="mse", level="system"):
    """Mean and (population) standard deviation of one metric across prediction sets."""
    vals = np.array([getattr(evaluate(s, records, level), metric) for s in sets])
    return float(vals.mean()), float(vals.std())


@dataclass
class AnnotatorAnalysis:
    k: int
    mse: dict[str, np.ndarray]  # level -> per-trial values
    srcc: dict[str, np.ndarray]

    def summary(self) -> dict[str, tuple[float, float]]:
        out = {}
        for level in LEVELS:
            out[f"{level}_mse"] = (float(self.mse[level].mean()), float(self.mse[level].std()))
            out[f"{level}_srcc"] = (float(self.srcc[level].mean()), float(self.srcc[level].std()))
        return out


def annotator_subsample_analysis(records, k, n_trials=100, seed=0,
                                 truth_size=4, pool_size=4) -> AnnotatorAnalysis:
    """Compare the mean of ``k`` held-out raters against a 4-rater ground truth.

    Each trial draws, per utterance, eight of its ratings, splits them into a
    ground-truth half and a candidate pool, and scores the mean of ``k`` pool
    ratings against the ground-truth mean.
    """
    records = [r for r in records]
    if not 1 <= k <= pool_size:
        raise ValueError(f"k must lie in 1..{pool_size}")
    need = truth_size + pool_size
    for r in records:
        if len(r.listener_ratings) < need:
            raise NotEnoughRatings(f"{r.utt_id} has {len(r.listener_ratings)} ratings, need {need}")
    rng = np.random.default_rng(seed)
    ratings = [np.array([x for _, x in r.listener_ratings], dtype=np.float64) for r in records]
    systems = sorted({r.system_id for r in records})
    sys_idx = np.array([systems.index(r.system_id) for r in records])
    sys_n = np.bincount(sys_idx, minlength=len(systems))

    res = {"mse": {l: [] for l in LEVELS}, "srcc": {l: [] for l in LEVELS}}
    for _ in range(n_trials):
        truth = np.empty(len(records))
        guess = np.empty(len(records))
        for i, r in enumerate(ratings):
            perm = rng.permutation(len(r))[:need]
            truth[i] = r[perm[:truth_size]].mean()
            pool = perm[truth_size:]
            guess[i] = r[rng.choice(pool, size=k, replace=False)].mean()
        sys_truth = np.bincount(sys_idx, truth, len(systems)) / sys_n
        sys_guess = np.bincount(sys_idx, guess, len(systems)) / sys_n
        for level, (g, t) in {"utterance": (guess, truth), "system": (sys_guess, sys_truth)}.items():
            res["mse"][level].append(mse(g, t))
            try:
                res["srcc"][level].append(srcc(g, t))
            except DegenerateInput:
                res["srcc"][level].append(float("nan"))
    return AnnotatorAnalysis(
        k,
        {l: np.array(v) for l, v in res["mse"].items()},
        {l: np.array(v) for l, v in res["srcc"].items()},
    )
