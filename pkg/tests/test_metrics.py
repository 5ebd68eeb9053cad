import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from moosenet.dataset import UtteranceRecord
from moosenet.errors import (
    DegenerateInput,
    EmptyInput,
    KeyMismatch,
    LengthMismatch,
    MissingRecord,
    NotEnoughRatings,
    TooFewMembers,
)
from moosenet.metrics import (
    PredictionSet,
    annotator_subsample_analysis,
    ensemble,
    evaluate,
    ktau,
    leave_one_out_ensembles,
    metric_spread,
    mse,
    pcc,
    read_predictions,
    srcc,
    system_aggregate,
    write_predictions,
)
from moosenet.synthetic import make_rated_records


# naive oracles: O(n^2) rank counting and pair enumeration

def naive_ranks(x):
    return [sum(1 for b in x if b < a) + (sum(1 for b in x if b == a) + 1) / 2 for a in x]


def naive_pearson(x, y):
    n = len(x)
    mx, my = sum(x) / n, sum(y) / n
    sxy = sum((a - mx) * (b - my) for a, b in zip(x, y))
    sxx = sum((a - mx) ** 2 for a in x)
    syy = sum((b - my) ** 2 for b in y)
    return sxy / math.sqrt(sxx * syy)


def naive_tau_b(x, y):
    conc = disc = tx = ty = 0
    for i, j in itertools.combinations(range(len(x)), 2):
        dx, dy = x[i] - x[j], y[i] - y[j]
        if dx == 0 and dy == 0:
            continue
        if dx == 0:
            tx += 1
        elif dy == 0:
            ty += 1
        elif dx * dy > 0:
            conc += 1
        else:
            disc += 1
    return (conc - disc) / math.sqrt((conc + disc + tx) * (conc + disc + ty))


def test_mse_examples():
    assert mse([1, 2], [1, 2]) == 0
    assert mse([3, 4], [3, 5]) == 0.5
    assert mse([1], [5]) == 16
    with pytest.raises(LengthMismatch):
        mse([1, 2], [1])
    with pytest.raises(EmptyInput):
        mse([], [])


def test_srcc_examples():
    assert srcc([1, 2, 3], [10, 20, 30]) == pytest.approx(1.0)
    assert srcc([1, 2, 3], [3, 2, 1]) == pytest.approx(-1.0)
    assert srcc([1, 2, 2, 3], [1, 2, 3, 3]) == pytest.approx(0.8333, abs=1e-4)
    assert srcc([1, 2, 2, 3], [1, 2, 3, 3]) == pytest.approx(
        naive_pearson([1, 2.5, 2.5, 4], [1, 2, 3.5, 3.5]), abs=1e-12)


def test_ktau_pcc_examples():
    x = np.array([0.3, 1.2, 2.0, 5.5])
    assert pcc(x, 2 * x + 1) == pytest.approx(1.0)
    assert ktau([1, 2, 3], [1, 3, 2]) == pytest.approx(1 / 3)
    assert ktau([1, 1, 2], [1, 2, 3]) == pytest.approx(2 / math.sqrt(6), abs=1e-4)


def test_degenerate_is_loud():
    for f in (srcc, pcc, ktau):
        with pytest.raises(DegenerateInput):
            f([1, 1, 1], [1, 2, 3])


@pytest.mark.parametrize("seed", range(20))
def test_against_naive_oracle(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(3, 40))
    x = rng.integers(0, 6, n).astype(float).tolist()
    y = (np.array(x) + rng.integers(-2, 3, n)).tolist()
    if len(set(x)) < 2 or len(set(y)) < 2:
        return
    assert srcc(x, y) == pytest.approx(naive_pearson(naive_ranks(x), naive_ranks(y)), abs=1e-10)
    assert pcc(x, y) == pytest.approx(naive_pearson(x, y), abs=1e-10)
    assert ktau(x, y) == pytest.approx(naive_tau_b(x, y), abs=1e-10)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_monotone_invariance_and_symmetry(seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=15)
    y = x + rng.normal(size=15)
    assert srcc(np.exp(x), y ** 3) == pytest.approx(srcc(x, y), abs=1e-12)
    assert ktau(np.exp(x), y ** 3) == pytest.approx(ktau(x, y), abs=1e-12)
    assert pcc(3 * x + 2, y) == pytest.approx(pcc(x, y), abs=1e-12)
    assert srcc(x, y) == pytest.approx(srcc(y, x), abs=1e-12)
    assert mse(x, y) == mse(y, x)


def make_records(mos_by_system):
    recs = []
    for s, values in mos_by_system.items():
        for i, v in enumerate(values):
            recs.append(UtteranceRecord(f"{s}-{i}", s, "test", 1.0, v))
    return recs


def test_system_aggregate():
    recs = make_records({"A": [3.0, 4.0], "B": [1.0]})
    systems, pred, true = system_aggregate(PredictionSet({"A-0": 3, "A-1": 5, "B-0": 2}), recs)
    assert systems == ["A", "B"]
    np.testing.assert_allclose(pred, [4.0, 2.0])
    np.testing.assert_allclose(true, [3.5, 1.0])
    with pytest.raises(MissingRecord):
        system_aggregate(PredictionSet({"C-0": 1.0}), recs)


def test_evaluate_perfect_both_levels():
    recs = make_records({"A": [3.0, 4.0], "B": [1.0, 1.5], "C": [4.5, 5.0]})
    pset = PredictionSet({r.utt_id: r.mos for r in recs})
    for level in ("utterance", "system"):
        rep = evaluate(pset, recs, level)
        assert rep.mse == 0 and rep.srcc == pytest.approx(1) and rep.pcc == pytest.approx(1)
        assert rep.ktau == pytest.approx(1)


def test_evaluate_swapped_systems():
    recs = make_records({"A": [2.0, 2.0], "B": [4.0, 4.0]})
    pset = PredictionSet({"A-0": 4, "A-1": 4, "B-0": 2, "B-1": 2})
    assert evaluate(pset, recs, "system").srcc == pytest.approx(-1)


def test_system_level_order_invariant():
    recs = make_records({"A": [2.0, 3.0], "B": [4.0, 4.5], "C": [1.0, 1.5]})
    preds = {r.utt_id: r.mos + 0.1 * i for i, r in enumerate(recs)}
    rev = dict(reversed(list(preds.items())))
    assert evaluate(PredictionSet(preds), recs[::-1]) == evaluate(PredictionSet(rev), recs)


def test_ensemble_basics():
    a = PredictionSet({"u": 2.0, "v": 3.0}, "a")
    b = PredictionSet({"u": 4.0, "v": 3.0}, "b")
    assert ensemble([a, b]).preds == {"u": 3.0, "v": 3.0}
    assert ensemble([a, a]).preds == a.preds
    with pytest.raises(KeyMismatch):
        ensemble([a, PredictionSet({"u": 1.0})])


def test_ensemble_mixture_variance():
    a = PredictionSet({"u": 2.0}, "a", {"u": 0.5})
    b = PredictionSet({"u": 4.0}, "b", {"u": 0.1})
    assert ensemble([a, b]).variances["u"] == pytest.approx(0.3 + 1.0)


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 10**6), k=st.integers(2, 10))
def test_ensemble_jensen(seed, k):
    rng = np.random.default_rng(seed)
    truth = rng.uniform(1, 5, 30)
    ids = [f"u{i}" for i in range(30)]
    sets = [PredictionSet(dict(zip(ids, truth + rng.normal(rng.normal(), 1, 30)))) for _ in range(k)]
    ens = ensemble(sets)
    member = np.mean([mse([s.preds[u] for u in ids], truth) for s in sets])
    assert mse([ens.preds[u] for u in ids], truth) <= member + 1e-12


def test_leave_one_out():
    a = PredictionSet({"u": 1.0, "v": 2.0}, "a")
    b = PredictionSet({"u": 3.0, "v": 5.0}, "b")
    loo = leave_one_out_ensembles([a, b])
    assert loo[0].preds == b.preds and loo[1].preds == a.preds
    with pytest.raises(TooFewMembers):
        leave_one_out_ensembles([a])
    same = leave_one_out_ensembles([a] * 10)
    recs = [UtteranceRecord("u", "A", "test", 1.0, 1.5), UtteranceRecord("v", "B", "test", 1.0, 2.5)]
    assert len(same) == 10
    assert metric_spread(same, recs, "mse", "utterance")[1] == 0


def test_prediction_csv_round_trip(tmp_path):
    p = PredictionSet({"u1": 3.25, "u2": 1.0 / 3}, "m", {"u1": 0.5}, {"u1": "A", "u2": "B"})
    write_predictions(tmp_path / "p.csv", p)
    back = read_predictions(tmp_path / "p.csv")
    assert back.preds == p.preds and back.variances == p.variances and back.systems == p.systems


def test_annotators_agree():
    recs = []
    for i in range(12):
        r = 1 + i % 5
        recs.append(UtteranceRecord(f"u{i}", f"s{i % 4}", "test", 1.0, float(r),
                                    tuple((f"L{j}", r) for j in range(8))))
    for k in (1, 2, 3, 4):
        res = annotator_subsample_analysis(recs, k, n_trials=5, seed=0)
        assert np.all(res.mse["utterance"] == 0) and np.all(res.mse["system"] == 0)


def test_annotators_more_is_better_and_deterministic():
    recs = make_rated_records(n_utts=150, seed=2)
    r1 = annotator_subsample_analysis(recs, 1, n_trials=40, seed=9)
    r4 = annotator_subsample_analysis(recs, 4, n_trials=40, seed=9)
    assert r4.mse["utterance"].mean() < r1.mse["utterance"].mean()
    again = annotator_subsample_analysis(recs, 1, n_trials=40, seed=9)
    np.testing.assert_array_equal(again.mse["system"], r1.mse["system"])
    np.testing.assert_array_equal(again.srcc["utterance"], r1.srcc["utterance"])


def test_annotators_need_eight():
    recs = [UtteranceRecord("u", "s", "test", 1.0, 3.0, (("a", 3),) * 7)]
    with pytest.raises(NotEnoughRatings):
        annotator_subsample_analysis(recs, 1)
