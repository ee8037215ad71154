"""Comparison indexes sharing one query interface.

* ``BinarySearchIndex``: plain lower bound over the whole key array.
* ``PgmBin``: one PLA level, segments located by binary search over first keys.
* ``PgmCss``: one PLA level, segments located through a static multiway
  directory (fanout B) over first keys, in the spirit of a CSS-tree.
* ``PgmRec``/``PgmCompressed``: thin wrappers over the recursive indexes.
"""
import numpy as np
from numba import njit

from . import _kernels
from .compression import build_compressed
from .index import as_sorted_keys, build_index, leaf_points, _as_query_array
from .pla import build_pla_arrays


@njit(cache=True, nogil=True)
def _whole_lower_bound(queries, data):
    out = np.empty(queries.shape[0], np.int64)
    n = data.shape[0]
    for q in range(queries.shape[0]):
        out[q] = _kernels.lower_bound(data, 0, n - 1, queries[q])
    return out


@njit(cache=True, nogil=True)
def _leaf_search(k, j, data, fk, sl, ic, eps, n):
    m = fk.shape[0]
    v = _kernels.local_predict(k, fk[j], sl[j], ic[j])
    if j + 1 < m and v > ic[j + 1]:
        v = ic[j + 1]
    pred = _kernels.clamp_floor(v, n)
    r, w = _kernels.window_lower(data, n, max(0, pred - eps), min(n - 1, pred + eps), pred, k)
    return r


@njit(cache=True, nogil=True)
def _bin_rank(queries, data, fk, sl, ic, eps):
    n = data.shape[0]
    m = fk.shape[0]
    out = np.empty(queries.shape[0], np.int64)
    for q in range(queries.shape[0]):
        k = queries[q]
        j = _kernels.upper_bound(fk, 0, m - 1, k) - 1
        if j < 0:
            j = 0
        out[q] = _leaf_search(k, j, data, fk, sl, ic, eps, n)
    return out


@njit(cache=True, nogil=True)
def _css_rank(queries, data, fk, sl, ic, eps, dir_keys, dir_off, fanout):
    """``dir_keys`` holds directory levels top-down, the last one being ``fk`` itself;
    level i+1's node p covers entries [p*fanout, (p+1)*fanout)."""
    n = data.shape[0]
    levels = dir_off.shape[0] - 1
    out = np.empty(queries.shape[0], np.int64)
    for q in range(queries.shape[0]):
        k = queries[q]
        p = 0
        for l in range(levels):
            base = dir_off[l]
            size = dir_off[l + 1] - base
            a = p * fanout if l > 0 else 0
            b = min(a + fanout, size) - 1 if l > 0 else size - 1
            u = _kernels.upper_bound(dir_keys[base:base + size], a, b, k)
            p = u - 1
            if p < a:
                p = a
        out[q] = _leaf_search(k, p, data, fk, sl, ic, eps, n)
    return out


class BinarySearchIndex:
    name = "binary"

    def __init__(self, keys):
        self.data = as_sorted_keys(keys)
        self.epsilon = 0

    def rank_batch(self, queries):
        return _whole_lower_bound(_as_query_array(queries), self.data.keys)

    def size_bytes(self):
        return 0

    def segments_per_level(self):
        return []


class _SingleLevel:
    def __init__(self, keys, epsilon):
        self.data = as_sorted_keys(keys)
        self.epsilon = int(epsilon)
        xs, ys = leaf_points(self.data.keys)
        self.model = build_pla_arrays(xs, ys, self.epsilon, key_count=len(self.data))

    def segments_per_level(self):
        return [len(self.model)]

    def leaf_model(self):
        m = self.model
        return m.first_keys, m.slopes, m.intercepts, m.key_count


class PgmBin(_SingleLevel):
    name = "pgm_bin"

    def rank_batch(self, queries):
        m = self.model
        return _bin_rank(_as_query_array(queries), self.data.keys, m.first_keys, m.slopes, m.intercepts,
                         self.epsilon)

    def size_bytes(self):
        return 24 * len(self.model)


class PgmCss(_SingleLevel):
    name = "pgm_css"

    def __init__(self, keys, epsilon, epsilon_internal=4):
        super().__init__(keys, epsilon)
        self.fanout = max(2, 2 * int(epsilon_internal))
        levels = [self.model.first_keys]
        while len(levels[-1]) > self.fanout:
            levels.append(levels[-1][::self.fanout])
        levels.reverse()
        self.directory = levels
        self._dir = np.ascontiguousarray(np.concatenate(levels), dtype=np.uint64)
        self._off = np.concatenate([[0], np.cumsum([len(l) for l in levels])]).astype(np.int64)

    def rank_batch(self, queries):
        m = self.model
        return _css_rank(_as_query_array(queries), self.data.keys, m.first_keys, m.slopes, m.intercepts,
                         self.epsilon, self._dir, self._off, self.fanout)

    def size_bytes(self):
        # segments plus the separator keys above the segment array
        return 24 * len(self.model) + 8 * sum(len(l) for l in self.directory[:-1])


class PgmRec:
    name = "pgm_rec"

    def __init__(self, keys, epsilon, epsilon_internal=4):
        self.index = build_index(keys, epsilon, epsilon_internal)
        self.data = self.index.data
        self.epsilon = int(epsilon)

    def rank_batch(self, queries):
        return self.index.rank_batch(queries)

    def size_bytes(self):
        return self.index.size_bytes()

    def segments_per_level(self):
        return [len(m) for m in self.index.levels]

    def leaf_model(self):
        m = self.index.levels[-1]
        return m.first_keys, m.slopes, m.intercepts, m.key_count


class PgmCompressed:
    name = "pgm_compressed"

    def __init__(self, keys, epsilon, epsilon_internal=4):
        self.source = build_index(keys, epsilon, epsilon_internal)
        self.index = build_compressed(self.source)
        self.data = self.index.data
        self.epsilon = int(epsilon)

    def rank_batch(self, queries):
        return self.index.rank_batch(queries)

    def size_bytes(self):
        return self.index.size_bytes()

    def segments_per_level(self):
        return [len(l) for l in self.index.levels]

    def leaf_model(self):
        lvl = self.index.levels[-1]
        sl, ic = lvl.decoded()
        return lvl.first_keys, sl, ic, lvl.key_count


INDEX_KINDS = {
    "binary": BinarySearchIndex,
    "pgm_bin": PgmBin,
    "pgm_css": PgmCss,
    "pgm_rec": PgmRec,
    "pgm_compressed": PgmCompressed,
}
