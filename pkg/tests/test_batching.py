from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from moosenet.batching import draw_batches, filter_by_duration, make_buckets
from moosenet.dataset import UtteranceRecord
from moosenet.errors import TooFewRecords, UtteranceTooLong


def recs(durations):
    return [UtteranceRecord(f"u{i}", "s", "train", d) for i, d in enumerate(durations)]


def test_filter_bounds_inclusive():
    kept = filter_by_duration(recs([0.5, 1.0, 12.0, 12.5]))
    assert [r.duration_s for r in kept] == [1.0, 12.0]
    assert filter_by_duration([]) == []
    rs = recs([1.5, 3.0])
    assert filter_by_duration(rs) == rs


def test_buckets_even():
    b = make_buckets(recs(np.linspace(1, 12, 40)), 20)
    assert [len(x.members) for x in b] == [2] * 20


def test_buckets_uneven():
    b = make_buckets(recs(np.linspace(1, 12, 41)), 20)
    sizes = [len(x.members) for x in b]
    assert set(sizes) <= {2, 3} and max(sizes) - min(sizes) <= 1 and sum(sizes) == 41


def test_buckets_too_few():
    with pytest.raises(TooFewRecords):
        make_buckets(recs(range(1, 11)), 20)


def test_bucket_ranges_ordered():
    rng = np.random.default_rng(0)
    b = make_buckets(recs(rng.uniform(1, 12, 200)), 20)
    for x in b:
        assert all(x.min_dur <= d < x.max_dur for d in x.durations)
    assert all(a.durations[-1] <= c.durations[0] for a, c in zip(b, b[1:]))


def test_greedy_packing_trace():
    b = make_buckets(recs([12, 12, 12, 12]), 1)
    batches = draw_batches(b, 0)
    assert [len(x.utt_ids) for x in batches] == [3, 1]
    assert [x.clean_duration_s for x in batches] == [36, 12]
    assert all(x.total_duration_s == 2 * x.clean_duration_s for x in batches)


def test_too_long_guarded():
    with pytest.raises(UtteranceTooLong):
        draw_batches(make_buckets(recs([41.0]), 1), 0)


@settings(max_examples=60, deadline=None)
@given(durs=st.lists(st.floats(0.2, 15.0), min_size=20, max_size=300), seed=st.integers(0, 10**6),
       paired=st.booleans())
def test_batch_invariants(durs, seed, paired):
    rs = filter_by_duration(recs(durs))
    if len(rs) < 20:
        return
    buckets = make_buckets(rs, 20)
    batches = draw_batches(buckets, seed, paired=paired)
    member_bucket = {u: b.index for b in buckets for u in b.members}
    seen = Counter()
    for batch in batches:
        assert batch.clean_duration_s <= 40.0 + 1e-9
        assert batch.total_duration_s <= 80.0 + 1e-9
        clean = [u for u, v in batch.items if v == "clean"]
        noisy = [u for u, v in batch.items if v == "noisy"]
        assert sorted(noisy) == (sorted(clean) if paired else [])
        assert {member_bucket[u] for u in clean} == {batch.bucket}
        seen.update(clean)
    assert seen == Counter(r.utt_id for r in rs)
    assert draw_batches(buckets, seed, paired=paired) == batches
