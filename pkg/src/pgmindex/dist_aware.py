"""Distribution-aware PGM-index.

Keys carry query probabilities. A key's tolerance shrinks with its
probability, ``max(1, min(ceil(1/p), eps))``, and searches gallop outward
from the prediction, so a frequently queried key is found after a handful of
probes. Upper levels repeat the construction: a segment covering items with
probabilities pi gets weight ``max(pi) / sum(pi)`` and hence tolerance
``min(ceil(sum/max), eps)``, and passes ``sum(pi)`` up as its own probability.
"""
import csv
import math
from dataclasses import dataclass, field
from typing import List, NamedTuple

import numpy as np
from numba import njit

from . import _kernels
from .errors import EmptyInput, InvalidProbability, InvalidRange, UnsortedData, check_epsilon
from .index import U64_MAX, SortedKeys, _as_query_array, _fix_out_of_universe
from .pla import PlaModel, build_pla_arrays

PROB_TOL = 1e-9


class WeightedKey(NamedTuple):
    key: int
    probability: float


@dataclass(frozen=True)
class NodeWeight:
    cum_prob: float
    max_child_prob: float


def tolerance_for(weight, epsilon):
    """Integer y-range for an item whose (relative) weight is ``weight``."""
    inv = np.ceil(1.0 / np.asarray(weight, dtype=np.float64) - 1e-12)
    return np.maximum(1, np.minimum(inv, epsilon)).astype(np.int64)


@dataclass
class DistAwarePgm:
    levels: List[PlaModel]
    weights: List[List[NodeWeight]] = field(repr=False)
    tolerances: List[np.ndarray] = field(repr=False)
    epsilon: int
    epsilon_internal: int
    key_count: int
    data: SortedKeys = field(repr=False)
    probabilities: np.ndarray = field(repr=False)

    def __post_init__(self):
        self._off = np.concatenate([[0], np.cumsum([len(m) for m in self.levels])]).astype(np.int64)
        self._fk = np.ascontiguousarray(np.concatenate([m.first_keys for m in self.levels]), dtype=np.uint64)
        self._sl = np.concatenate([m.slopes for m in self.levels]).astype(np.float64)
        self._ic = np.concatenate([m.intercepts for m in self.levels]).astype(np.float64)
        eps = [self.epsilon_internal] * (len(self.levels) - 1) + [self.epsilon]
        self._eps = np.array(eps, dtype=np.int64)

    @property
    def height(self):
        return len(self.levels)

    @property
    def leaf_tolerances(self):
        return self.tolerances[-1]

    def stats(self):
        counts = [len(m) for m in self.levels]
        return {"height": self.height, "segments_per_level": counts, "total_segments": sum(counts)}

    def rank_batch(self, queries, with_windows=False):
        q = _as_query_array(queries)
        ranks, windows = dist_rank_kernel(q, self.data.keys, self._fk, self._sl, self._ic,
                                          self._off, self._eps, self.key_count)
        ranks = _fix_out_of_universe(queries, ranks, self.key_count)
        return (ranks, windows) if with_windows else ranks

    def rank(self, key):
        return int(self.rank_batch([key])[0])

    def leaf_windows(self, queries):
        return self.rank_batch(queries, with_windows=True)[1][:, -1]

    def member(self, key):
        r = self.rank(key)
        return r < self.key_count and int(self.data.keys[r]) == key

    def predecessor(self, key):
        r = self.rank(key)
        return int(self.data.keys[r - 1]) if r > 0 else None

    def lookup(self, key):
        r = self.rank(key)
        if r < self.key_count and int(self.data.keys[r]) == key and self.data.payload is not None:
            return self.data.block(r)
        return None

    def range(self, lo, hi):
        if lo > hi:
            raise InvalidRange(f"range lower bound {lo} exceeds upper bound {hi}")
        i0 = self.rank(lo)
        i1 = self.key_count if hi >= U64_MAX else self.rank(hi + 1)
        keys, payload = self.data.keys, self.data.payload
        for i in range(i0, i1):
            yield int(keys[i]) if payload is None else (int(keys[i]), self.data.block(i))


@njit(cache=True, nogil=True)
def gallop(arr, size, pred, k, strict):
    """Exponential search from ``pred`` for the first index with arr[i] > k
    (``strict``) or arr[i] >= k. Returns (index, size of the binary-searched bracket)."""
    here = arr[pred] > k if strict else arr[pred] >= k
    if not here:
        prev = pred
        step = 1
        while True:
            pos = pred + step
            if pos >= size:
                lo, hi = prev + 1, size - 1
                break
            hit = arr[pos] > k if strict else arr[pos] >= k
            if hit:
                lo, hi = prev + 1, pos - 1
                break
            prev = pos
            step *= 2
    else:
        prev = pred
        step = 1
        while True:
            pos = pred - step
            if pos < 0:
                lo, hi = 0, prev - 1
                break
            hit = arr[pos] > k if strict else arr[pos] >= k
            if not hit:
                lo, hi = pos + 1, prev - 1
                break
            prev = pos
            step *= 2
    if strict:
        r = _kernels.upper_bound(arr, lo, hi, k)
    else:
        r = _kernels.lower_bound(arr, lo, hi, k)
    return r, max(1, hi - lo + 1)


@njit(cache=True, nogil=True)
def dist_rank_kernel(queries, data, fk, sl, ic, lvl_off, eps, n):
    nq = queries.shape[0]
    levels = lvl_off.shape[0] - 1
    ranks = np.empty(nq, np.int64)
    windows = np.ones((nq, levels), np.int64)
    for q in range(nq):
        k = queries[q]
        j = 0
        for l in range(levels):
            base = lvl_off[l]
            g = base + j
            v = _kernels.local_predict(k, fk[g], sl[g], ic[g])
            # a loose cap: tight enough for gap keys, never binding on covered ones
            if g + 1 < lvl_off[l + 1] and v > ic[g + 1] + 2 * eps[l]:
                v = ic[g + 1] + 2 * eps[l]
            size = lvl_off[l + 2] - lvl_off[l + 1] if l + 1 < levels else n
            pred = _kernels.clamp_floor(v, size)
            if l + 1 < levels:
                child = fk[lvl_off[l + 1]:lvl_off[l + 2]]
                u, w = gallop(child, size, pred, k, True)
                j = u - 1 if u > 0 else 0
            else:
                u, w = gallop(data, n, pred, k, False)
                ranks[q] = u
            windows[q, l] = w
    return ranks, windows


def _validate(keys, probs):
    keys = np.ascontiguousarray(keys, dtype=np.uint64)
    probs = np.asarray(probs, dtype=np.float64)
    if len(keys) == 0:
        raise EmptyInput("no weighted keys")
    if len(keys) != len(probs):
        raise ValueError("one probability per key")
    if np.any(~np.isfinite(probs)) or np.any(probs <= 0) or np.any(probs > 1):
        raise InvalidProbability("probabilities must lie in (0, 1]")
    if abs(probs.sum() - 1.0) > PROB_TOL:
        raise InvalidProbability(f"probabilities sum to {probs.sum()!r}, not 1")
    if len(keys) > 1 and np.any(keys[1:] <= keys[:-1]):
        raise UnsortedData("weighted keys must be strictly increasing")
    return keys, probs


def build_dist_aware(input, epsilon, epsilon_internal=4, probs=None, payload=None):
    """Build from a sequence of WeightedKey, or from parallel ``keys``/``probs`` arrays."""
    epsilon = check_epsilon(epsilon)
    epsilon_internal = check_epsilon(epsilon_internal, "epsilon_internal")
    if probs is None:
        items = list(input)
        keys = [int(w[0]) for w in items]
        probs = [float(w[1]) for w in items]
    else:
        keys = input
    keys, probs = _validate(keys, probs)
    n = len(keys)

    xs, ys, pi = keys, np.arange(n, dtype=np.int64), probs
    tol = tolerance_for(pi, epsilon)
    levels, weights, tols = [], [], []
    eps_here, size = epsilon, n
    while True:
        model = build_pla_arrays(xs, ys, eps_here, tolerances=tol, key_count=size)
        model.epsilon = eps_here
        cum = np.add.reduceat(pi, model.starts)
        mx = np.maximum.reduceat(pi, model.starts)
        levels.append(model)
        weights.append([NodeWeight(float(c), float(q)) for c, q in zip(cum, mx)])
        tols.append(tol)
        if len(model) == 1:
            break
        xs = model.first_keys
        ys = np.arange(len(model), dtype=np.int64)
        tol = tolerance_for(mx / cum, epsilon_internal)
        pi = cum
        eps_here, size = epsilon_internal, len(model)
    levels.reverse()
    weights.reverse()
    tols.reverse()
    return DistAwarePgm(levels, weights, tols, epsilon, epsilon_internal, n, SortedKeys(keys, payload), probs)


def dist_rank(index, key):
    return index.rank(key)


def entropy(probs):
    p = np.asarray(probs, dtype=np.float64)
    return float(np.sum(p * np.log2(1.0 / p)))


def expected_cost_report(index, workload):
    """(sum_i p_i * sum_levels log2(window), entropy) for a weighted workload."""
    if isinstance(workload, tuple) and len(workload) == 2 and not isinstance(workload[0], (int, np.integer)):
        keys, probs = workload
    else:
        items = list(workload)
        keys = [int(w[0]) for w in items]
        probs = [float(w[1]) for w in items]
    keys, probs = _validate(keys, probs)
    _, windows = index.rank_batch(keys, with_windows=True)
    cost = float(np.sum(probs * np.log2(windows).sum(axis=1)))
    return cost, entropy(probs)


def zipf_probabilities(n, s=1.0, seed=0):
    """Zipf(s) query probabilities over n keys, ranks assigned by a seeded permutation."""
    if n < 1 or s <= 0:
        raise ValueError("need n >= 1 and s > 0")
    w = 1.0 / np.arange(1, n + 1, dtype=np.float64) ** s
    w /= w.sum()
    perm = np.random.default_rng(seed).permutation(n)
    return w[perm]


def load_workload(path):
    """Read ``key,probability`` CSV rows (a header row is optional)."""
    keys, probs = [], []
    with open(path, newline="") as f:
        for i, row in enumerate(csv.reader(f)):
            if not row:
                continue
            if i == 0 and not row[0].strip().isdigit():
                continue
            if len(row) != 2:
                raise InvalidProbability(f"line {i + 1}: expected key,probability")
            keys.append(int(row[0]))
            probs.append(float(row[1]))
    return _validate(keys, probs)


def save_workload(path, keys, probs):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["key", "probability"])
        for k, p in zip(keys, probs):
            w.writerow([int(k), repr(float(p))])
