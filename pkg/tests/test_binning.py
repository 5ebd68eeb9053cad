import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from moosenet.binning import BinSpec, assign_bin, expected_mos, fit_bins
from moosenet.errors import NotNormalized, OutOfRange, TooFewDistinctValues, TooFewSamples
from moosenet.synthetic import bvcc_like_mos


@pytest.fixture
def spec3():
    return fit_bins([1, 1, 2, 2, 3, 3], n_bins=3, min_count=2)


def test_three_bin_example(spec3):
    assert spec3.edges == (1.0, 1.5, 2.5, 5.0)
    assert spec3.counts == (2, 2, 2)
    np.testing.assert_array_equal(spec3.centers, [1.25, 2.0, 3.75])


def test_single_bin():
    spec = fit_bins([1.5, 2.0, 4.0, 4.5, 3.0], n_bins=1, min_count=5)
    assert spec.edges == (1.0, 5.0) and spec.counts == (5,)
    assert spec.centers[0] == 3.0


def test_too_few_samples():
    with pytest.raises(TooFewSamples):
        fit_bins([1, 1, 2, 2, 3, 3], n_bins=3, min_count=5)


def test_strict_min_count():
    vals = np.repeat([1.0, 2.0], 5)
    fit_bins(vals, 2, 5)
    with pytest.raises(TooFewSamples):
        fit_bins(vals, 2, 5, strict=True)


def test_too_few_distinct():
    with pytest.raises(TooFewDistinctValues):
        fit_bins(np.repeat([1.0, 2.0], 10), 3, 2)


def test_assign_closed_last(spec3):
    assert assign_bin(spec3, 5.0) == spec3.n_bins - 1


def test_assign_half_open(spec3):
    assert assign_bin(spec3, spec3.edges[2]) == 2
    assert assign_bin(spec3, np.nextafter(spec3.edges[2], 0)) == 1
    assert assign_bin(spec3, 1.0) == 0


def test_assign_out_of_range(spec3):
    with pytest.raises(OutOfRange):
        assign_bin(spec3, 0.5)
    with pytest.raises(OutOfRange):
        assign_bin(spec3, 5.01)


def test_expected_mos_examples(spec3):
    for i, c in enumerate(spec3.centers):
        assert expected_mos(spec3, np.eye(3)[i]) == c
    assert expected_mos(spec3, np.full(3, 1 / 3)) == pytest.approx(7 / 3)
    assert expected_mos(spec3, [0.5, 0.5, 0.0]) == pytest.approx(1.625)
    with pytest.raises(NotNormalized):
        expected_mos(spec3, [0.5, 0.4, 0.0])


def test_bvcc_like_32_bins():
    vals = bvcc_like_mos()
    assert len(np.unique(vals)) == 33
    spec = fit_bins(vals, 32, 5)
    assert min(spec.counts) >= 5 and sum(spec.counts) == len(vals)
    assert np.all(np.diff(spec.centers) > 0)


def test_csv_round_trip(spec3):
    assert BinSpec.from_csv(spec3.to_csv()) == spec3


def brute_force_best(counts, n_bins):
    """Exhaustive search over contiguous partitions; smallest spread of bin totals."""
    from itertools import combinations

    k = len(counts)
    best = None
    for cuts in combinations(range(1, k), n_bins - 1):
        bounds = (0,) + cuts + (k,)
        totals = [sum(counts[a:b]) for a, b in zip(bounds, bounds[1:])]
        cost = sum((t - sum(counts) / n_bins) ** 2 for t in totals)
        if best is None or cost < best - 1e-12:
            best = cost
    return best


@settings(max_examples=60, deadline=None)
@given(counts=st.lists(st.integers(1, 9), min_size=2, max_size=9), data=st.data())
def test_partition_is_optimal(counts, data):
    n_bins = data.draw(st.integers(1, len(counts)))
    grid = 1.0 + np.arange(len(counts)) * (4.0 / max(len(counts) - 1, 1))
    vals = np.repeat(grid, counts)
    spec = fit_bins(vals, n_bins, 1)
    cost = sum((c - len(vals) / n_bins) ** 2 for c in spec.counts)
    assert cost == pytest.approx(brute_force_best(counts, n_bins))


@settings(max_examples=80, deadline=None)
@given(n_bins=st.integers(1, 12), per=st.integers(1, 6), seed=st.integers(0, 10**6))
def test_equal_counts_on_divisible(n_bins, per, seed):
    rng = np.random.default_rng(seed)
    vals = np.unique(np.round(rng.uniform(1, 5, 5 * n_bins * per), 6))[: n_bins * per]
    if len(vals) < n_bins * per:
        return
    spec = fit_bins(vals, n_bins, 1)
    assert max(spec.counts) - min(spec.counts) <= 1


@settings(max_examples=80, deadline=None)
@given(seed=st.integers(0, 10**6), n_bins=st.integers(1, 8))
def test_partition_and_membership(seed, n_bins):
    rng = np.random.default_rng(seed)
    vals = np.round(rng.uniform(1, 5, 60) * 8) / 8
    if len(np.unique(vals)) < n_bins:
        return
    spec = fit_bins(vals, n_bins, 1)
    for v in vals:
        i = assign_bin(spec, v)
        assert spec.edges[i] <= v and (v < spec.edges[i + 1] or i == n_bins - 1)
    for q in rng.uniform(1, 5, 50):
        assert 0 <= assign_bin(spec, q) < n_bins
    assert spec.edges[0] == 1.0 and spec.edges[-1] == 5.0


@settings(max_examples=80, deadline=None)
@given(p=st.lists(st.floats(0, 1), min_size=3, max_size=3).filter(lambda x: sum(x) > 1e-3),
       i=st.integers(0, 1), frac=st.floats(0, 1))
def test_expected_mos_monotone(p, i, frac):
    spec = fit_bins([1, 1, 2, 2, 3, 3], 3, 1)
    p = np.array(p) / np.sum(p)
    q = p.copy()
    move = q[i] * frac
    q[i] -= move
    q[i + 1] += move
    q /= q.sum()
    assert expected_mos(spec, q) >= expected_mos(spec, p) - 1e-12
