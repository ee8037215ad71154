"""Compressed PGM-index: a minimum distinct-slope dictionary plus Elias-Fano intercepts.

Every level with at least ``MIN_COMPRESSED_SEGMENTS`` segments replaces each
segment's slope by a shared representative from the smallest set of values
stabbing all slope intervals, and stores integer intercepts (segment-local,
nondecreasing) in an :class:`~pgmindex.elias_fano.InterceptStore`. Both
changes cost at most one position of error, so queries search with radius
``epsilon + 1``.
"""
import math
import struct
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from numba import njit

from . import _kernels
from .elias_fano import InterceptStore, ef_access_at, encode_intercepts, pack_bits, read_bits, read_bits_at
from .errors import CorruptFile, InvalidInterval
from .index import PgmIndex, U64_MAX, _as_query_array, _fix_out_of_universe, as_sorted_keys, leaf_points

MIN_COMPRESSED_SEGMENTS = 8
NUDGE_STEPS = 8


# --- slope minimization --------------------------------------------------------


@dataclass
class SlopeTable:
    """Distinct slopes and the per-segment index into them."""
    table: np.ndarray
    assignment: np.ndarray
    groups: List[np.ndarray] = field(default_factory=list, repr=False)
    intersections: List[tuple] = field(default_factory=list, repr=False)

    @property
    def t(self):
        return len(self.table)

    @property
    def width(self):
        return max(0, math.ceil(math.log2(self.t))) if self.t > 1 else 0

    @property
    def packed(self):
        return pack_bits(self.assignment, self.width)

    @property
    def size_bits(self):
        return 64 * self.t + len(self.assignment) * self.width

    def slope_of(self, j):
        return float(self.table[self.assignment[j]])


def minimize_slopes(intervals, closed=False):
    """Fewest slopes such that every interval contains one.

    Intervals are sorted lexicographically and cut into maximal prefixes with a
    common intersection; each prefix is represented by the midpoint of that
    intersection. Intervals are open unless ``closed`` is set.
    """
    iv = np.asarray(list(intervals), dtype=np.float64).reshape(-1, 2)
    a, b = iv[:, 0], iv[:, 1]
    bad = ~(a <= b) if closed else ~(a < b)
    if np.any(bad):
        j = int(np.flatnonzero(bad)[0])
        raise InvalidInterval(f"interval {j} ({a[j]}, {b[j]}) is empty")
    m = len(iv)
    if m == 0:
        return SlopeTable(np.zeros(0), np.zeros(0, dtype=np.int64))
    order = np.lexsort((b, a))
    assignment = np.empty(m, dtype=np.int64)
    table, groups, inters = [], [], []
    start = 0
    lo, hi = a[order[0]], b[order[0]]
    for pos in range(1, m + 1):
        if pos < m:
            j = order[pos]
            nhi = min(hi, b[j])
            fits = a[j] <= nhi if closed else a[j] < nhi
            if fits:
                lo, hi = a[j], nhi
                continue
        grp = order[start:pos]
        assignment[grp] = len(table)
        table.append(0.5 * (lo + hi))
        groups.append(grp)
        inters.append((float(lo), float(hi)))
        if pos < m:
            start = pos
            lo, hi = a[order[pos]], b[order[pos]]
    return SlopeTable(np.array(table, dtype=np.float64), assignment, groups, inters)


# --- compressed levels -----------------------------------------------------------


@dataclass
class CompressedLevel:
    first_keys: np.ndarray
    key_count: int
    epsilon: int
    slopes: Optional[np.ndarray] = None        # raw levels only
    intercepts: Optional[np.ndarray] = None    # raw levels only
    slope_table: Optional[SlopeTable] = None
    store: Optional[InterceptStore] = None

    @property
    def compressed(self):
        return self.slope_table is not None

    def __len__(self):
        return len(self.first_keys)

    def size_bits(self):
        m = len(self)
        if not self.compressed:
            return 192 * m
        return 64 * m + self.slope_table.size_bits + self.store.size_bits

    def decoded(self):
        """(slopes, intercepts) as float arrays, for inspection."""
        if not self.compressed:
            return self.slopes, self.intercepts
        return (self.slope_table.table[self.slope_table.assignment],
                (self.store.to_array() - self.intercept_offset).astype(np.float64))

    @property
    def intercept_offset(self):
        return self.epsilon + 1 if self.compressed else 0


@dataclass
class CompressedPgm:
    levels: List[CompressedLevel]
    epsilon_leaf: int
    epsilon_internal: int
    key_count: int
    data: object = field(repr=False)
    extra_slopes: int = 0

    def __post_init__(self):
        self._flatten()

    @property
    def epsilon_effective(self):
        return [lvl.epsilon + (1 if lvl.compressed else 0) for lvl in self.levels]

    @property
    def height(self):
        return len(self.levels)

    def size_bytes(self):
        return sum((lvl.size_bits() + 7) // 8 for lvl in self.levels)

    def uncompressed_bytes(self):
        return 24 * sum(len(lvl) for lvl in self.levels)

    def stats(self):
        return {
            "height": self.height,
            "segments_per_level": [len(l) for l in self.levels],
            "distinct_slopes_per_level": [l.slope_table.t if l.compressed else len(l) for l in self.levels],
            "compressed_levels": [l.compressed for l in self.levels],
            "bytes": self.size_bytes(),
            "uncompressed_bytes": self.uncompressed_bytes(),
        }

    def _flatten(self):
        L = len(self.levels)
        self._off = np.concatenate([[0], np.cumsum([len(l) for l in self.levels])]).astype(np.int64)
        self._fk = np.ascontiguousarray(np.concatenate([l.first_keys for l in self.levels]), dtype=np.uint64)
        self._raw = np.array([not l.compressed for l in self.levels], dtype=np.bool_)
        self._eps = np.array(self.epsilon_effective, dtype=np.int64)
        sl, ic = [], []
        tabs, asg, low, high, smp = [], [], [], [], []
        # table off, assign off, width, low off, high off, sample off, low width, intercept shift
        meta = np.zeros((L, 8), dtype=np.int64)
        cur = [0, 0, 0, 0, 0]
        for i, l in enumerate(self.levels):
            if l.compressed:
                sl.append(np.zeros(len(l)))
                ic.append(np.zeros(len(l)))
                words = l.slope_table.packed
                meta[i] = (cur[0], cur[1], l.slope_table.width, cur[2], cur[3], cur[4], l.store.low_width,
                           l.intercept_offset)
                tabs.append(l.slope_table.table)
                asg.append(words)
                low.append(l.store.low)
                high.append(l.store.high)
                smp.append(l.store.samples)
                cur[0] += l.slope_table.t
                cur[1] += len(words)
                cur[2] += len(l.store.low)
                cur[3] += len(l.store.high)
                cur[4] += len(l.store.samples)
            else:
                sl.append(l.slopes)
                ic.append(l.intercepts)
        cat = lambda xs, dt: np.ascontiguousarray(np.concatenate(xs) if xs else np.zeros(1), dtype=dt)
        self._sl = cat(sl, np.float64)
        self._ic = cat(ic, np.float64)
        self._tab = cat(tabs, np.float64)
        # trailing pad word for the branch-free bit reader
        self._asg = cat(asg + [np.zeros(1, np.uint64)], np.uint64)
        self._low = cat(low + [np.zeros(1, np.uint64)], np.uint64)
        self._high = cat(high, np.uint64)
        # pad so slices never come out empty
        self._smp = np.ascontiguousarray(np.concatenate(smp + [np.zeros(1, np.int64)]), dtype=np.int64)
        self._meta = meta

    def rank_batch(self, queries, with_windows=False):
        q = _as_query_array(queries)
        ranks, leaf_w, inner_w = compressed_rank_kernel(
            q, self.data.keys, self._fk, self._off, self._eps, self.key_count, self._raw,
            self._sl, self._ic, self._tab, self._asg, self._low, self._high, self._smp, self._meta)
        ranks = _fix_out_of_universe(queries, ranks, self.key_count)
        return (ranks, leaf_w, inner_w) if with_windows else ranks

    def rank(self, key):
        return int(self.rank_batch([key])[0])

    def probe_window(self, key):
        return int(self.rank_batch([key], with_windows=True)[1][0])

    def member(self, key):
        r = self.rank(key)
        return r < self.key_count and int(self.data.keys[r]) == key

    def predecessor(self, key):
        r = self.rank(key)
        return int(self.data.keys[r - 1]) if r > 0 else None

    def lookup(self, key):
        r = self.rank(key)
        if r < self.key_count and int(self.data.keys[r]) == key:
            return None if self.data.payload is None else self.data.block(r)
        return None

    def range(self, lo, hi):
        from .errors import InvalidRange
        if lo > hi:
            raise InvalidRange(f"range lower bound {lo} exceeds upper bound {hi}")
        i0 = self.rank(lo)
        i1 = self.key_count if hi >= U64_MAX else self.rank(hi + 1)
        keys, payload = self.data.keys, self.data.payload
        for i in range(i0, i1):
            yield int(keys[i]) if payload is None else (int(keys[i]), self.data.block(i))

    def save(self, path):
        with open(path, "wb") as f:
            f.write(serialize_compressed(self))


@njit(cache=True, nogil=True, inline="always")
def _level_params(l, j, g, raw, sl, ic, tab, asg, low, high, smp, meta):
    if raw[l]:
        return sl[g], ic[g]
    a = read_bits_at(asg, meta[l, 1], j, meta[l, 2])
    s = tab[meta[l, 0] + np.int64(a)]
    c = ef_access_at(low, meta[l, 3], high, meta[l, 4], smp, meta[l, 5], meta[l, 6], j) - meta[l, 7]
    return s, float(c)


@njit(cache=True, nogil=True)
def compressed_rank_kernel(queries, data, fk, lvl_off, eps, n, raw, sl, ic, tab, asg, low, high, smp, meta):
    nq = queries.shape[0]
    levels = lvl_off.shape[0] - 1
    ranks = np.empty(nq, np.int64)
    leaf_w = np.empty(nq, np.int64)
    inner_w = np.zeros(nq, np.int64)
    for q in range(nq):
        k = queries[q]
        j = 0
        for l in range(levels):
            base = lvl_off[l]
            nseg = lvl_off[l + 1] - base
            g = base + j
            s, c = _level_params(l, j, g, raw, sl, ic, tab, asg, low, high, smp, meta)
            v = _kernels.local_predict(k, fk[g], s, c)
            if j + 1 < nseg:
                s2, c2 = _level_params(l, j + 1, g + 1, raw, sl, ic, tab, asg, low, high, smp, meta)
                if v > c2:
                    v = c2
            size = lvl_off[l + 2] - lvl_off[l + 1] if l + 1 < levels else n
            pred = _kernels.clamp_floor(v, size)
            e = eps[l]
            lo = max(0, pred - e)
            hi = min(size - 1, pred + e)
            if l + 1 < levels:
                child = fk[lvl_off[l + 1]:lvl_off[l + 2]]
                u, w = _kernels.window_upper(child, size, lo, hi, pred, k)
                if w > inner_w[q]:
                    inner_w[q] = w
                j = u - 1 if u > 0 else 0
            else:
                r, w = _kernels.window_lower(data, n, lo, hi, pred, k)
                ranks[q] = r
                leaf_w[q] = w
    return ranks, leaf_w, inner_w


# --- construction ----------------------------------------------------------------


def _level_points(index):
    """(keys, positions) each level approximates, root->leaf."""
    pts = []
    for i, lvl in enumerate(index.levels):
        if i + 1 < index.height:
            below = index.levels[i + 1]
            pts.append((below.first_keys, np.arange(len(below), dtype=np.int64)))
        else:
            pts.append(leaf_points(index.data.keys))
    return pts


def _choose_intercepts(xs, ys, tols, starts, counts, slopes):
    """Integer local intercepts, nondecreasing, centred in each feasible band where possible.

    With an integer intercept c and floor prediction, any c in
    ``[ceil(band_lo - 1), floor(band_hi)]`` keeps the error within tol + 1.
    """
    lo_b, hi_b = _kernels.intercept_band_kernel(xs, ys, tols, starts, counts, slopes)
    lowest = np.ceil(lo_b - 1)
    c = np.maximum(np.floor(0.5 * (lo_b + hi_b)), lowest)
    c = np.maximum.accumulate(c)
    return c.astype(np.int64)


def _segment_errors(xs, ys, starts, counts, first_keys, slopes, intercepts, size):
    err = _kernels.max_error_kernel(xs, ys, starts, counts, first_keys, slopes,
                                    intercepts.astype(np.float64), size)
    return np.maximum.reduceat(err, starts)


def compress_level(model, xs, ys):
    """Compress one PLA level; returns (CompressedLevel, extra table entries) or None if it must stay raw."""
    m = len(model)
    eps = model.epsilon
    size = model.key_count
    if np.any(np.isnan(model.slope_lo)):
        raise ValueError("level has no slope ranges (was it loaded from a file?); rebuild it first")
    xs = np.ascontiguousarray(xs, dtype=np.uint64)
    ys = np.ascontiguousarray(ys, dtype=np.float64)
    tols = np.full(len(xs), float(eps)) if model.tolerances is None else model.tolerances
    intervals = np.column_stack([np.maximum(model.slope_lo, 0.0), model.slope_hi])
    st = minimize_slopes(intervals, closed=True)
    table = list(st.table)
    assignment = st.assignment.copy()

    def attempt():
        s = np.array(table)[assignment]
        c = _choose_intercepts(xs, ys, tols, model.starts, model.covered, s)
        err = _segment_errors(xs, ys, model.starts, model.covered, model.first_keys, s, c, size)
        return s, c, err

    s, c, err = attempt()
    extra = 0
    for g, grp in enumerate(st.groups):
        if np.all(err[grp] <= eps + 1):
            continue
        # nudge the shared slope toward the centre of the failing interval
        for _ in range(NUDGE_STEPS):
            bad = grp[err[grp] > eps + 1]
            if len(bad) == 0:
                break
            centre = 0.5 * (intervals[bad[0], 0] + intervals[bad[0], 1])
            table[g] = float(np.nextafter(table[g], centre))
            s, c, err = attempt()
        for j in grp[err[grp] > eps + 1]:
            table.append(float(model.slopes[j]))
            assignment[j] = len(table) - 1
            extra += 1
        s, c, err = attempt()
    if np.any(err > eps + 1):
        return None
    # shift so the lowest admissible intercept, -(eps + 1), encodes as 0
    off = eps + 1
    if c.min() + off < 0 or c.max() + off >= size + 2 * off:
        return None
    st = SlopeTable(np.array(table), assignment, st.groups, st.intersections)
    store = encode_intercepts(c + off, size + 2 * off)
    return CompressedLevel(model.first_keys.copy(), size, eps, slope_table=st, store=store), extra


def build_compressed(index, min_segments=MIN_COMPRESSED_SEGMENTS):
    """Compress every level of ``index`` that has at least ``min_segments`` segments."""
    levels = []
    extra = 0
    for lvl, (xs, ys) in zip(index.levels, _level_points(index)):
        done = compress_level(lvl, xs, ys) if len(lvl) >= min_segments else None
        if done is None:
            levels.append(CompressedLevel(lvl.first_keys.copy(), lvl.key_count, lvl.epsilon,
                                          slopes=lvl.slopes.copy(), intercepts=lvl.intercepts.copy()))
        else:
            levels.append(done[0])
            extra += done[1]
    return CompressedPgm(levels, index.epsilon_leaf, index.epsilon_internal, index.key_count,
                         index.data, extra)


def compressed_rank(cindex, key):
    return cindex.rank(key)


# --- binary format -----------------------------------------------------------------
# See docs/formats.md for the bit-level layout.

MAGIC = b"PGMC"
VERSION = 1
_HEAD = struct.Struct("<4sHIIQI")
_LVL = struct.Struct("<BQQI")
_TAB = struct.Struct("<IB")
_EF = struct.Struct("<BQQQQ")


def serialize_compressed(c):
    out = [_HEAD.pack(MAGIC, VERSION, c.epsilon_leaf, c.epsilon_internal, c.key_count, c.height)]
    for lvl in c.levels:
        m = len(lvl)
        out.append(_LVL.pack(1 if lvl.compressed else 0, m, lvl.key_count, lvl.epsilon))
        out.append(lvl.first_keys.astype("<u8").tobytes())
        if not lvl.compressed:
            out.append(lvl.slopes.astype("<f8").tobytes())
            out.append(lvl.intercepts.astype("<f8").tobytes())
            continue
        st, ef = lvl.slope_table, lvl.store
        words = st.packed
        out.append(_TAB.pack(st.t, st.width))
        out.append(st.table.astype("<f8").tobytes())
        out.append(struct.pack("<Q", len(words)))
        out.append(words.astype("<u8").tobytes())
        out.append(_EF.pack(ef.low_width, ef.universe, len(ef.low), len(ef.high), len(ef.samples)))
        out.append(ef.low.astype("<u8").tobytes())
        out.append(ef.high.astype("<u8").tobytes())
        out.append(ef.samples.astype("<u8").tobytes())
    return b"".join(out)


class _Reader:
    def __init__(self, buf):
        self.buf = buf
        self.off = 0

    def unpack(self, st):
        if self.off + st.size > len(self.buf):
            raise CorruptFile("compressed index truncated")
        v = st.unpack_from(self.buf, self.off)
        self.off += st.size
        return v

    def array(self, dtype, count):
        nbytes = 8 * count
        if self.off + nbytes > len(self.buf):
            raise CorruptFile("compressed index truncated")
        a = np.frombuffer(self.buf, dtype, count, self.off).copy()
        self.off += nbytes
        return a


def deserialize_compressed(buf, data):
    data = as_sorted_keys(data)
    r = _Reader(buf)
    magic, version, eps_leaf, eps_int, n, height = r.unpack(_HEAD)
    if magic != MAGIC:
        raise CorruptFile(f"bad magic {magic!r}")
    if version != VERSION:
        raise CorruptFile(f"unsupported version {version}")
    if n != len(data):
        raise CorruptFile(f"index built over {n} keys, data has {len(data)}")
    levels = []
    for _ in range(height):
        kind, m, kc, eps = r.unpack(_LVL)
        fk = r.array("<u8", m).astype(np.uint64)
        if kind == 0:
            sl = r.array("<f8", m).astype(np.float64)
            ic = r.array("<f8", m).astype(np.float64)
            levels.append(CompressedLevel(fk, kc, eps, slopes=sl, intercepts=ic))
            continue
        if kind != 1:
            raise CorruptFile(f"unknown level kind {kind}")
        t, width = r.unpack(_TAB)
        table = r.array("<f8", t).astype(np.float64)
        (nwords,) = r.unpack(struct.Struct("<Q"))
        words = r.array("<u8", nwords).astype(np.uint64)
        assignment = np.array([int(read_bits(words, j, width)) for j in range(m)], dtype=np.int64)
        lw, universe, nlow, nhigh, nsmp = r.unpack(_EF)
        low = r.array("<u8", nlow).astype(np.uint64)
        high = r.array("<u8", nhigh).astype(np.uint64)
        smp = r.array("<u8", nsmp).astype(np.int64)
        st = SlopeTable(table, assignment)
        store = InterceptStore(low, high, smp, lw, m, universe)
        levels.append(CompressedLevel(fk, kc, eps, slope_table=st, store=store))
    if r.off != len(buf):
        raise CorruptFile("trailing bytes after compressed index")
    return CompressedPgm(levels, eps_leaf, eps_int, n, data)


def load_compressed(path, data):
    with open(path, "rb") as f:
        return deserialize_compressed(f.read(), data)
