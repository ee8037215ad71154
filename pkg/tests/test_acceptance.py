"""Acceptance gate: one test per criterion, each reporting a one-line verdict.

Run ``pytest tests/test_acceptance.py -v``; the terminal summary lists
PASS/FAIL per criterion along with the measured figures.
"""
import bisect
import math
import time

import numpy as np
import pytest

from oracles import dp_min_segments, grid_min_feasible, min_stabbing_exhaustive, random_keys
from pgmindex import (SortedKeys, build_compressed, build_dist_aware, build_index, build_pla_arrays,
                      encode_intercepts, minimize_slopes, min_space_tune, min_time_tune)
from pgmindex.datasets import DatasetSpec, generate_keys
from pgmindex.dist_aware import zipf_probabilities
from pgmindex.index import leaf_points
from pgmindex.tuner import LatencyMeter, LeafSizer, budget


def _say(record_property, text):
    record_property("detail", text)
    print(text)


def _small_inputs(count, seed=0):
    """Seeded key sets with n <= 500 mixing uniform, clustered and duplicate-heavy data."""
    rng = np.random.default_rng(seed)
    out = []
    for i in range(count):
        n = int(rng.integers(20, 501))
        kind = i % 4
        if kind == 0:
            keys = random_keys(rng, n, 1 << 20)
        elif kind == 1:
            keys = np.sort(np.exp(rng.normal(0, 1.5, n)) * 1e4).astype(np.uint64)
        elif kind == 2:
            centers = rng.integers(0, 1 << 30, 5)
            keys = np.sort((centers[rng.integers(0, 5, n)] + rng.integers(0, 2000, n)).astype(np.uint64))
        else:
            keys = random_keys(rng, n, max(2, n // 3), dup=True)
        out.append(keys)
    return out


def test_criterion_01_pla_optimality(record_property):
    t0 = time.perf_counter()
    cases = _small_inputs(200, seed=1)
    mism = 0
    for i, keys in enumerate(cases):
        eps = (1, 2, 4, 8)[i % 4]
        xs, ys = leaf_points(keys)
        got = len(build_pla_arrays(xs, ys, eps, key_count=len(keys)))
        want = dp_min_segments(list(zip(xs.tolist(), ys.tolist())), [eps] * len(xs))
        mism += got != want
    elapsed = time.perf_counter() - t0
    _say(record_property, f"200 cases, {mism} mismatches vs DP oracle, {elapsed:.1f}s")
    assert mism == 0
    assert elapsed <= 120


def test_criterion_02_segment_count_bound(record_property, lognormal_1m, uniform_1m):
    worst = 0.0
    builds = 0
    matrix = [(k, e) for i, k in enumerate(_small_inputs(120, seed=2)) for e in (1, 2, 4, 8, 32)]
    zipf = generate_keys(DatasetSpec("zipf", 100_000, seed=3, param=1.0))
    for keys in (lognormal_1m, uniform_1m, zipf):
        matrix += [(keys, e) for e in (8, 32, 128, 512, 2048)]
    for keys, eps in matrix:
        n = len(keys)
        xs, ys = leaf_points(keys)
        m = len(build_pla_arrays(xs, ys, eps, key_count=n))
        bound = math.ceil(n / (2 * eps))
        worst = max(worst, m / bound)
        builds += 1
        assert m <= bound, (n, eps, m, bound)
        # every level of a recursive index obeys it too
        idx = build_index(keys, eps, 4)
        sizes = [len(lv) for lv in idx.levels]
        for upper, lower in zip(sizes[:-1], sizes[1:]):
            assert upper <= math.ceil(lower / 8)
    _say(record_property, f"{builds} builds, max m / ceil(n/2eps) = {worst:.3f}")


def test_criterion_03_greedy_dominance(record_property, lognormal_1m, uniform_1m):
    zipf = generate_keys(DatasetSpec("zipf", 200_000, seed=5, param=1.0))
    sets = {"lognormal": lognormal_1m, "uniform": uniform_1m, "zipf": zipf}
    for small in _small_inputs(40, seed=4):
        sets[f"small{len(sets)}"] = small
    for name, keys in sets.items():
        xs, ys = leaf_points(keys)
        for eps in (1, 4, 16, 32, 64, 256, 1024):
            opt = len(build_pla_arrays(xs, ys, eps, key_count=len(keys)))
            gr = len(build_pla_arrays(xs, ys, eps, method="greedy", key_count=len(keys)))
            assert opt <= gr, (name, eps, opt, gr)
    xs, ys = leaf_points(lognormal_1m)
    opt = len(build_pla_arrays(xs, ys, 32, key_count=len(lognormal_1m)))
    gr = len(build_pla_arrays(xs, ys, 32, method="greedy", key_count=len(lognormal_1m)))
    saving = 100.0 * (gr - opt) / gr
    _say(record_property, f"lognormal n=1e6 eps=32: m_opt={opt} m_greedy={gr} saving={saving:.1f}%")
    assert saving > 0


def _check_queries(index, keys, probes, payload=None, stride=None):
    """Compare every query type against bisect on a Python list; returns mismatch count.

    Scalar queries run on every ``stride``-th probe (default: about 2048 of them).
    """
    klist = [int(k) for k in keys]
    n = len(klist)
    ranks = index.rank_batch(probes)
    want = np.searchsorted(keys, probes, side="left")
    bad = int(np.count_nonzero(ranks != want))
    span = max(1, (klist[-1] - klist[0]) * 100 // n)  # about 100 keys per range
    for x in probes[:: stride or max(1, len(probes) // 2048)].tolist():
        r = bisect.bisect_left(klist, x)
        member = r < n and klist[r] == x
        bad += index.member(x) != member
        bad += index.predecessor(x) != (klist[r - 1] if r > 0 else None)
        if payload is not None:
            bad += index.lookup(x) != (payload[r] if member else None)
        hi = x + span
        got = list(index.range(x, hi))
        exp = klist[r:bisect.bisect_right(klist, hi)]
        if payload is not None:
            exp = [(k, payload[r + i]) for i, k in enumerate(exp)]
        bad += got != exp
    return bad


def _exhaustive_cases(dup=False):
    rng = np.random.default_rng(13 if dup else 11)
    cases = []
    for i in range(12):
        n = int(rng.integers(50, 2049))
        universe = int(rng.integers(n + 1, 4 * n + 2))
        if dup:
            universe = max(2, n // 4)
        keys = random_keys(rng, n, universe, dup=dup)
        eps = (1, 2, 4, 8, 16, 64)[i % 6]
        cases.append((keys, universe, eps))
    return cases


def _windows_ok(kind, windows, eps, eps_int):
    lw, iw = windows
    if kind == "compressed":
        return lw.max() <= 2 * (eps + 1) + 1 and iw.max() <= 2 * (eps_int + 1) + 1
    return lw.max() <= 2 * eps + 1 and iw.max() <= 2 * eps_int + 1


def _all_indexes(keys, eps, eps_int, payload, seed, min_segments=8):
    plain = build_index(keys if payload is None else SortedKeys(keys, payload), eps, eps_int)
    comp = build_compressed(plain, min_segments=min_segments)
    probs = zipf_probabilities(len(keys), 1.0, seed)
    dist = build_dist_aware(keys, eps, eps_int, probs=probs, payload=payload)
    return {"plain": plain, "compressed": comp, "dist_aware": dist}


def _window_pair(kind, index, probes):
    if kind == "dist_aware":
        _, w = index.rank_batch(probes, with_windows=True)
        return w[:, -1], (w[:, :-1].max(axis=1) if w.shape[1] > 1 else np.zeros(len(probes), np.int64))
    _, lw, iw = index.rank_batch(probes, with_windows=True)
    return lw, iw


def test_criterion_04_query_exactness(record_property, lognormal_1m):
    bad = 0
    probes_total = 0
    for keys, universe, eps in _exhaustive_cases():
        payload = [bytes([i % 251]) * 4 for i in range(len(keys))]
        probes = np.arange(universe + 1, dtype=np.uint64)
        for kind, index in _all_indexes(keys, eps, 2, payload, seed=eps, min_segments=1).items():
            bad += _check_queries(index, keys, probes, payload, stride=1)
            probes_total += len(probes)
    # duplicate-heavy multisets (the weighted variant needs distinct keys)
    for keys, universe, eps in _exhaustive_cases(dup=True):
        probes = np.arange(universe + 1, dtype=np.uint64)
        plain = build_index(keys, eps, 2)
        for index in (plain, build_compressed(plain, min_segments=1)):
            bad += _check_queries(index, keys, probes, stride=1)
            probes_total += len(probes)
    rng = np.random.default_rng(12)
    keys = np.unique(lognormal_1m)
    hits = keys[rng.integers(0, len(keys), 50_000)]
    misses = rng.integers(int(keys[0]), int(keys[-1]), 50_000, dtype=np.uint64)
    probes = np.concatenate([hits, misses])
    for kind, index in _all_indexes(keys, 64, 4, None, seed=0).items():
        bad += _check_queries(index, keys, probes)
        probes_total += len(probes)
    _say(record_property, f"{probes_total} probes over plain/compressed/dist-aware, {bad} mismatches")
    assert bad == 0


def _leaf_bound(kind, eps):
    return 2 * (eps + 1) + 1 if kind == "compressed" else 2 * eps + 1


def test_criterion_05_window_confinement(record_property, lognormal_1m):
    worst = {}
    ok = True
    for keys, universe, eps in _exhaustive_cases():
        probes = np.arange(universe + 1, dtype=np.uint64)
        for kind, index in _all_indexes(keys, eps, 2, None, seed=eps, min_segments=1).items():
            lw, iw = _window_pair(kind, index, probes)
            ok &= bool(_windows_ok(kind, (lw, iw), eps, 2))
            worst[kind] = max(worst.get(kind, 0.0), lw.max() / _leaf_bound(kind, eps))
    for keys, universe, eps in _exhaustive_cases(dup=True):
        probes = np.arange(universe + 1, dtype=np.uint64)
        plain = build_index(keys, eps, 2)
        for kind, index in (("plain", plain), ("compressed", build_compressed(plain, min_segments=1))):
            ok &= bool(_windows_ok(kind, _window_pair(kind, index, probes), eps, 2))
    rng = np.random.default_rng(12)
    keys = np.unique(lognormal_1m)
    probes = np.concatenate([keys[rng.integers(0, len(keys), 50_000)],
                             rng.integers(int(keys[0]), int(keys[-1]), 50_000, dtype=np.uint64)])
    for kind, index in _all_indexes(keys, 64, 4, None, seed=0).items():
        lw, iw = _window_pair(kind, index, probes)
        ok &= bool(_windows_ok(kind, (lw, iw), 64, 4))
        worst[kind] = max(worst.get(kind, 0.0), lw.max() / _leaf_bound(kind, 64))
    _say(record_property, "max leaf window / bound (2eps+1, compressed 2(eps+1)+1): " + ", ".join(f"{k}={v:.3f}" for k, v in worst.items()))
    assert ok


def test_criterion_06_slope_table_minimality(record_property):
    rng = np.random.default_rng(6)
    bad = 0
    for case in range(500):
        m = int(rng.integers(1, 13))
        lo = rng.integers(0, 40, m)
        hi = lo + rng.integers(1, 15, m)
        intervals = [(float(a), float(b)) for a, b in zip(lo, hi)]
        closed = bool(case % 2)
        table = minimize_slopes(intervals, closed=closed)
        bad += table.t != min_stabbing_exhaustive(intervals, closed=closed)
        for j, (a, b) in enumerate(intervals):
            s = table.slope_of(j)
            bad += not (a <= s <= b if closed else a < s < b)
    ex = minimize_slopes([(2, 7), (3, 6), (4, 8), (7, 9)])
    first = tuple(float(v) for v in ex.intersections[0])
    _say(record_property, f"500 cases, {bad} mismatches; worked example t={ex.t}, first intersection {first}")
    assert bad == 0
    assert ex.t == 2 and first == (4.0, 6.0)


def test_criterion_07_intercept_store(record_property):
    rng = np.random.default_rng(7)
    bad = 0
    slack = []
    for _ in range(100):
        m = int(rng.integers(1, 20_000))
        n = int(rng.integers(1, 10 ** int(rng.integers(2, 9))))
        values = np.sort(rng.integers(0, n, m))
        store = encode_intercepts(values, n)
        bad += not np.array_equal(store.to_array(), values)
        for j in rng.integers(0, m, 50):
            bad += store.access(int(j)) != values[j]
        bound = m * max(0, math.ceil(math.log2(n / m))) + 3 * m
        slack.append(bound - store.size_bits)
        assert store.size_bits <= bound, (m, n, store.size_bits, bound)
    _say(record_property, f"100 sequences, {bad} round-trip errors, min slack to bound {min(slack)} bits")
    assert bad == 0


def test_criterion_08_compressed_size(record_property, lognormal_1m):
    parts = []
    for eps in (64, 128, 256):
        idx = build_index(lognormal_1m, eps, 4)
        comp = build_compressed(idx)
        saving = 100.0 * (1 - comp.size_bytes() / idx.size_bytes())
        parts.append(f"eps={eps}: {comp.size_bytes()}B vs {idx.size_bytes()}B ({saving:.1f}%)")
        assert comp.size_bytes() < idx.size_bytes()
    _say(record_property, "; ".join(parts))


BOUNDS = [16 << 10, 32 << 10, 64 << 10, 256 << 10, 1 << 20]


@pytest.mark.parametrize("which", ["uniform", "lognormal"])
def test_criterion_09_tuner_min_time(record_property, which, lognormal_1m, uniform_1m):
    keys = uniform_1m if which == "uniform" else lognormal_1m
    tol = 1024
    search = (8, len(keys) // 2)
    cap = budget(search)
    oracle_sizer = LeafSizer(keys)
    lines = []
    for bound in BOUNDS:
        res = min_time_tune(keys, bound, tol, search_range=search)
        want = grid_min_feasible(oracle_sizer.space, bound + tol, search)
        gap = abs(oracle_sizer.space(res.epsilon_star) - oracle_sizer.space(want))
        lines.append(f"{bound >> 10}K: eps={res.epsilon_star} oracle={want} probes={res.iterations}/{cap} "
                     f"{res.elapsed_s:.1f}s")
        assert res.epsilon_star == want or gap <= tol
        assert res.iterations <= cap
        assert res.elapsed_s <= 30
    _say(record_property, f"{which}: " + "; ".join(lines))


def test_criterion_10_tuner_min_space(record_property, lognormal_1m):
    probe = LatencyMeter(lognormal_1m, 100_000, seed=99)
    t_ref, _ = probe.mean_ns(256)
    t_max = t_ref
    tol = 0.15 * t_max
    res = min_space_tune(lognormal_1m, t_max, tol, query_batch=100_000, seed=0)
    again = [LatencyMeter(lognormal_1m, 100_000, seed=100 + r).mean_ns(res.epsilon_star)[0] for r in range(5)]
    within = sum(t <= t_max + 2 * tol for t in again)
    _say(record_property, f"t_max={t_max:.0f}ns tol={tol:.0f}ns eps*={res.epsilon_star} "
                          f"re-measured {[round(t) for t in again]} -> {within}/5 within bound")
    assert within >= 4


def test_criterion_11_dist_aware_windows(record_property):
    n, eps = 10_000, 256
    keys = np.unique(generate_keys(DatasetSpec("uniform", 30_000, seed=8, param=2.0 ** 40)))[:n]
    probs = zipf_probabilities(n, 1.0, seed=8)
    dist = build_dist_aware(keys, eps, 4, probs=probs)
    windows = dist.leaf_windows(keys)
    allowed = 2 * np.minimum(np.ceil(1.0 / probs), eps) + 1
    violations = int(np.count_nonzero(windows > allowed))

    uni = build_dist_aware(keys, eps, 4, probs=np.full(n, 1.0 / n))
    std = build_index(keys, eps, 4)
    same_leaf = all(np.array_equal(getattr(uni.levels[-1], f), getattr(std.levels[-1], f))
                    for f in ("first_keys", "slopes", "intercepts"))
    same_shape = len(uni.levels) == len(std.levels) and all(
        np.array_equal(a.first_keys, b.first_keys) for a, b in zip(uni.levels, std.levels))
    _say(record_property, f"{violations} window violations over {n} keys; uniform build: "
                          f"leaf identical={same_leaf}, per-level segmentation identical={same_shape}")
    assert violations == 0
    assert same_leaf and same_shape
