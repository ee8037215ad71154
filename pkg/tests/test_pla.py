import dataclasses

import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import dp_min_segments, dp_min_segments_full, distinct_points
from pgmindex import (KeyPoint, OptimalPLA, Segment, build_greedy_pla, build_optimal_pla,
                      build_optimal_pla_ranged, build_pla_arrays, segment_predict, verify_epsilon)
from pgmindex.errors import EmptyInput, InvalidEpsilon, UnsortedData
from pgmindex.index import leaf_points

SMALL_DUPS = [27, 29, 32, 32, 33, 37, 37, 37, 38, 40, 41, 43, 44, 46]


def points_of(keys):
    return [KeyPoint(k, i) for i, k in enumerate(keys)]


sorted_keys = st.lists(st.integers(0, 5000), min_size=1, max_size=150).map(sorted)
epsilons = st.sampled_from([1, 2, 3, 4, 8, 16])


class TestExamples:
    def test_small_dups_single_segment(self):
        model = build_optimal_pla(points_of(SMALL_DUPS), 2)
        assert len(model) == 1
        assert verify_epsilon(model, distinct_points(SMALL_DUPS))

    def test_small_dups_prediction_near_rank(self):
        model = build_optimal_pla(points_of(SMALL_DUPS), 2)
        seg = model.segments[0]
        assert abs(segment_predict(seg, 37, len(SMALL_DUPS)) - 5) <= 2

    def test_arithmetic_keys_one_segment(self):
        pts = [KeyPoint(100 + i, i) for i in range(1000)]
        model = build_optimal_pla(pts, 1)
        assert len(model) == 1
        seg = model.segments[0]
        assert seg.slope == pytest.approx(1.0)
        # absolute-form intercept: y = x - 100
        assert seg.intercept - seg.first_key * seg.slope == pytest.approx(-100.0)

    def test_greedy_arithmetic_one_segment(self):
        assert len(build_greedy_pla([KeyPoint(i, i) for i in range(1000)], 1)) == 1

    def test_seeded_uniform_matches_dp(self):
        rng = np.random.default_rng(42)
        keys = np.sort(rng.integers(0, 1 << 20, 64))
        model = build_optimal_pla(points_of(keys.tolist()), 4)
        pts = distinct_points(keys)
        assert len(model) == dp_min_segments(pts, [4] * len(pts))

    def test_ranged_alternating_matches_dp(self):
        rng = np.random.default_rng(7)
        keys = np.sort(rng.choice(1 << 16, 48, replace=False)).tolist()
        tols = [1 if i % 2 == 0 else 8 for i in range(48)]
        model = build_optimal_pla_ranged([(k, i, t) for i, (k, t) in enumerate(zip(keys, tols))])
        assert len(model) == dp_min_segments([(k, i) for i, k in enumerate(keys)], tols)
        assert verify_epsilon(model, [(k, i) for i, k in enumerate(keys)], tols)

    def test_ranged_single_point(self):
        assert len(build_optimal_pla_ranged([(KeyPoint(5, 0), 3)])) == 1

    def test_identity_segment_predict(self):
        seg = Segment(0, 1.0, 0.0, (0.5, 1.5))
        assert segment_predict(seg, 5) == 5
        assert seg.predict(5) == 5

    def test_single_point_segment_range(self):
        model = build_optimal_pla([KeyPoint(10, 0)], 3)
        seg = model.segments[0]
        assert seg.slope == 1.0
        assert seg.slope_range == (0.0, 2.0 ** 53)

    def test_perturbed_slope_fails_verification(self):
        pts = [KeyPoint(0, 0), KeyPoint(10, 1), KeyPoint(20, 2)]
        model = build_optimal_pla(pts, 1)
        assert verify_epsilon(model, pts)
        lo, hi = model.slope_lo[0], model.slope_hi[0]
        # a wide position range so the [0, n-1] clamp cannot mask the error
        bad = dataclasses.replace(model, slopes=np.array([hi + 10.0]), key_count=1000)
        assert not verify_epsilon(bad, pts)
        assert lo <= model.slopes[0] <= hi


class TestErrors:
    def test_empty(self):
        with pytest.raises(EmptyInput):
            build_optimal_pla([], 2)
        with pytest.raises(EmptyInput):
            build_greedy_pla([], 2)
        with pytest.raises(EmptyInput):
            build_optimal_pla_ranged([])

    @pytest.mark.parametrize("eps", [0, -1, 1.5])
    def test_bad_epsilon(self, eps):
        with pytest.raises(InvalidEpsilon):
            build_optimal_pla(points_of([1, 2, 3]), eps)

    def test_zero_tolerance(self):
        with pytest.raises(InvalidEpsilon):
            build_optimal_pla_ranged([(1, 0, 1), (2, 1, 0)])

    def test_unsorted(self):
        with pytest.raises(UnsortedData):
            build_optimal_pla(points_of([3, 1, 2]), 1)
        with pytest.raises(UnsortedData):
            build_pla_arrays(np.array([3, 1], dtype=np.uint64), np.arange(2), 1)


class TestStreaming:
    def test_consumes_iterator_once(self):
        pulled = []

        def gen():
            for i, k in enumerate(range(0, 8000, 8)):
                pulled.append(k)
                yield KeyPoint(k + (i % 7), i)

        model = build_optimal_pla(gen(), 2)
        assert len(pulled) == 1000
        assert len(set(pulled)) == 1000
        assert model.key_count == 1000

    def test_incremental_api(self):
        pla = OptimalPLA(1)
        for i in range(10):
            assert pla.add_point(i * 2, i)
        assert not pla.add_point(100, 10)
        seg = pla.segment()
        assert seg.first_key == 0 and seg.covered_count == 10
        lo, hi = pla.slope_range()
        assert lo <= seg.slope <= hi

    def test_reset(self):
        pla = OptimalPLA(1)
        pla.add_point(5, 0)
        pla.reset()
        assert pla.add_point(1, 0)
        assert pla.segment().first_key == 1


@given(sorted_keys, epsilons)
def test_optimal_is_epsilon_approximate(keys, eps):
    model = build_optimal_pla(points_of(keys), eps)
    assert verify_epsilon(model, distinct_points(keys))
    assert np.all(np.diff(model.first_keys.astype(np.float64)) > 0)
    assert np.all(model.slopes >= 0)
    assert np.all((model.slope_lo <= model.slopes) & (model.slopes <= model.slope_hi))


@given(sorted_keys, epsilons)
def test_greedy_is_epsilon_approximate_and_dominated(keys, eps):
    greedy = build_greedy_pla(points_of(keys), eps)
    assert verify_epsilon(greedy, distinct_points(keys))
    assert len(build_optimal_pla(points_of(keys), eps)) <= len(greedy)


@given(sorted_keys, epsilons)
def test_segments_cover_two_eps_keys(keys, eps):
    xs, ys = leaf_points(np.array(keys, dtype=np.uint64))
    m = len(build_pla_arrays(xs, ys, eps, key_count=len(keys)))
    assert m <= -(-len(keys) // (2 * eps))


@given(sorted_keys, epsilons)
def test_streaming_and_array_builders_agree(keys, eps):
    a = build_optimal_pla(points_of(keys), eps)
    pts = distinct_points(keys)
    b = build_pla_arrays(np.array([p[0] for p in pts], dtype=np.uint64), np.array([p[1] for p in pts]), eps)
    assert len(a) == len(b)
    assert np.array_equal(a.first_keys, b.first_keys)


@given(sorted_keys, epsilons)
def test_uniform_ranges_match_plain(keys, eps):
    pts = distinct_points(keys)
    ranged = build_optimal_pla_ranged([(k, y, eps) for k, y in pts])
    assert len(ranged) == len(build_optimal_pla(points_of(keys), eps))


@given(st.lists(st.tuples(st.integers(0, 3000), st.integers(1, 6)), min_size=1, max_size=40,
                unique_by=lambda t: t[0]))
def test_ranged_matches_dp(items):
    items.sort()
    pts = [(k, i) for i, (k, _) in enumerate(items)]
    tols = [t for _, t in items]
    model = build_optimal_pla_ranged([(k, y, t) for (k, y), t in zip(pts, tols)])
    assert len(model) == dp_min_segments(pts, tols)
    assert verify_epsilon(model, pts, tols)


@given(st.lists(st.integers(0, 2000), min_size=2, max_size=60, unique=True).map(sorted), epsilons)
def test_every_covered_key_predicted_within_eps(keys, eps):
    model = build_optimal_pla(points_of(keys), eps)
    for i, k in enumerate(keys):
        assert abs(model.predict(k) - i) <= eps


@given(st.lists(st.tuples(st.integers(0, 200), st.integers(1, 3)), min_size=1, max_size=14,
                unique_by=lambda t: t[0]))
def test_two_pointer_dp_matches_plain_dp(items):
    items.sort()
    pts = [(k, i) for i, (k, _) in enumerate(items)]
    tols = [t for _, t in items]
    assert dp_min_segments(pts, tols) == dp_min_segments_full(pts, tols)
