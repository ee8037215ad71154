"""Recursive PGM-index over a sorted array of 64-bit keys."""
import struct
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from . import _kernels
from .errors import CorruptFile, EmptyInput, InvalidRange, UnsortedData, check_epsilon
from .pla import PlaModel, build_pla_arrays

U64_MAX = 2 ** 64 - 1


@dataclass
class SortedKeys:
    """Sorted key array (duplicates allowed) with optional fixed-width payloads."""
    keys: np.ndarray
    payload: Optional[np.ndarray] = None

    def __post_init__(self):
        self.keys = np.ascontiguousarray(self.keys, dtype=np.uint64)
        if len(self.keys) > 1 and np.any(self.keys[1:] < self.keys[:-1]):
            raise UnsortedData("keys must be nondecreasing")
        if self.payload is not None:
            p = self.payload
            if len(p) and isinstance(p[0], (bytes, bytearray)):
                width = len(p[0])
                if any(len(b) != width for b in p):
                    raise ValueError("payload blocks must share one width")
                p = np.frombuffer(b"".join(p), dtype=np.uint8).reshape(len(p), width)
            self.payload = np.asarray(p)
            if len(self.payload) != len(self.keys):
                raise ValueError("payload needs one block per key")

    def __len__(self):
        return len(self.keys)

    def block(self, i):
        """Payload of key i; byte blocks come back as ``bytes``."""
        b = self.payload[i]
        return b.tobytes() if self.payload.ndim == 2 and self.payload.dtype == np.uint8 else b


def as_sorted_keys(data):
    return data if isinstance(data, SortedKeys) else SortedKeys(np.asarray(data))


def leaf_points(keys):
    """Points the leaf level approximates.

    Each distinct key at its first-occurrence rank, plus ``(x + 1, rank(x + 1))``
    after every repeated key x when x + 1 is not itself a key. Without the
    extra point the model only sees the start of a long run of duplicates and
    can place keys just above it more than epsilon away from their rank.
    """
    n = len(keys)
    uniq, first = np.unique(keys, return_index=True)
    nxt = np.append(first[1:], n)
    dup = (nxt - first) > 1
    gap_next = np.append(uniq[1:] - uniq[:-1] > 1, uniq[-1] < U64_MAX)
    brk = np.flatnonzero(dup & gap_next)
    if len(brk) == 0:
        return uniq, first.astype(np.int64)
    xs = np.concatenate([uniq, uniq[brk] + np.uint64(1)])
    ys = np.concatenate([first, nxt[brk]]).astype(np.int64)
    order = np.argsort(xs, kind="stable")
    return xs[order], ys[order]


@dataclass
class PgmIndex:
    levels: List[PlaModel]
    epsilon_leaf: int
    epsilon_internal: int
    key_count: int
    data: SortedKeys = field(repr=False)

    def __post_init__(self):
        self._flatten()

    def _flatten(self):
        counts = [len(m) for m in self.levels]
        self._off = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
        self._fk = np.ascontiguousarray(np.concatenate([m.first_keys for m in self.levels]), dtype=np.uint64)
        self._sl = np.ascontiguousarray(np.concatenate([m.slopes for m in self.levels]), dtype=np.float64)
        self._ic = np.ascontiguousarray(np.concatenate([m.intercepts for m in self.levels]), dtype=np.float64)
        eps = [self.epsilon_internal] * (len(self.levels) - 1) + [self.epsilon_leaf]
        self._eps = np.array(eps, dtype=np.int64)

    @property
    def height(self):
        return len(self.levels)

    @property
    def keys(self):
        return self.data.keys

    @property
    def segment_count(self):
        return sum(len(m) for m in self.levels)

    def stats(self):
        counts = [len(m) for m in self.levels]
        fanouts = [counts[i + 1] / counts[i] for i in range(len(counts) - 1)]
        return {"height": self.height, "segments_per_level": counts, "fanouts": fanouts,
                "total_segments": sum(counts)}

    def size_bytes(self):
        """Index footprint: 8-byte key, slope and intercept per segment."""
        return 24 * self.segment_count

    # --- queries ---------------------------------------------------------

    def _run(self, queries):
        q = _as_query_array(queries)
        return _kernels.pgm_rank_kernel(q, self.data.keys, self._fk, self._sl, self._ic,
                                        self._off, self._eps, self.key_count)

    def rank_batch(self, queries, with_windows=False):
        ranks, leaf_w, inner_w = self._run(queries)
        ranks = _fix_out_of_universe(queries, ranks, self.key_count)
        if with_windows:
            return ranks, leaf_w, inner_w
        return ranks

    def rank(self, key):
        return int(self.rank_batch([key])[0])

    def probe_window(self, key):
        return int(self._run([key])[1][0])

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

    def range_bounds(self, lo, hi):
        if lo > hi:
            raise InvalidRange(f"range lower bound {lo} exceeds upper bound {hi}")
        i0 = self.rank(lo)
        i1 = self.key_count if hi >= U64_MAX else self.rank(hi + 1)
        return i0, i1

    def range(self, lo, hi):
        """Iterate keys (or (key, payload) pairs) with lo <= key <= hi, in order."""
        i0, i1 = self.range_bounds(lo, hi)
        keys = self.data.keys
        payload = self.data.payload
        for i in range(i0, i1):
            yield int(keys[i]) if payload is None else (int(keys[i]), self.data.block(i))

    # --- serialization ---------------------------------------------------

    def save(self, path):
        with open(path, "wb") as f:
            f.write(serialize_index(self))


def _as_query_array(queries):
    """Queries as uint64; values outside the universe are clamped (ranks fixed up after)."""
    arr = np.asarray(queries).ravel()
    if arr.dtype.kind == "u":
        return np.ascontiguousarray(arr, dtype=np.uint64)
    if arr.dtype.kind == "i":
        return np.clip(arr, 0, None).astype(np.uint64)
    if arr.dtype == object:
        return np.array([min(max(int(x), 0), U64_MAX) for x in arr], dtype=np.uint64)
    raise TypeError(f"queries must be integers, got dtype {arr.dtype}")


def _fix_out_of_universe(queries, ranks, n):
    arr = np.asarray(queries)
    if arr.dtype == object:
        for i, x in enumerate(arr.ravel()):
            if int(x) < 0:
                ranks[i] = 0
            elif int(x) > U64_MAX:
                ranks[i] = n
    elif arr.dtype.kind == "i":
        ranks[arr.ravel() < 0] = 0
    return ranks


def build_levels(xs, ys, key_count, epsilon_leaf, epsilon_internal):
    levels = [build_pla_arrays(xs, ys, epsilon_leaf, key_count=key_count)]
    while len(levels[-1]) > 1:
        below = levels[-1]
        m = len(below)
        levels.append(build_pla_arrays(below.first_keys, np.arange(m), epsilon_internal, key_count=m))
    levels.reverse()
    return levels


def build_index(data, epsilon_leaf=64, epsilon_internal=4):
    """Build the recursive index; ``data`` is a SortedKeys or a sorted key array."""
    epsilon_leaf = check_epsilon(epsilon_leaf, "epsilon_leaf")
    epsilon_internal = check_epsilon(epsilon_internal, "epsilon_internal")
    data = as_sorted_keys(data)
    n = len(data)
    if n == 0:
        raise EmptyInput("cannot index an empty key array")
    xs, ys = leaf_points(data.keys)
    levels = build_levels(xs, ys, n, epsilon_leaf, epsilon_internal)
    return PgmIndex(levels, epsilon_leaf, epsilon_internal, n, data)


# --- binary format -----------------------------------------------------------
# "PGMI" | version u16 | eps_leaf u32 | eps_internal u32 | n u64 | levels u32
# then per level root->leaf: m u64 | key_count u64 | first_key u64[m] |
# slope f64[m] | intercept f64[m]. Little-endian throughout.

MAGIC = b"PGMI"
VERSION = 1
_HEAD = struct.Struct("<4sHIIQI")
_LEVEL = struct.Struct("<QQ")


def serialize_index(index):
    parts = [_HEAD.pack(MAGIC, VERSION, index.epsilon_leaf, index.epsilon_internal,
                        index.key_count, index.height)]
    for m in index.levels:
        parts.append(_LEVEL.pack(len(m), m.key_count))
        parts.append(m.first_keys.astype("<u8").tobytes())
        parts.append(m.slopes.astype("<f8").tobytes())
        parts.append(m.intercepts.astype("<f8").tobytes())
    return b"".join(parts)


def deserialize_index(buf, data):
    """Rebuild a queryable index from bytes plus the key array it was built over.

    Slope ranges and coverage are not stored, so the loaded levels can answer
    queries but cannot be recompressed.
    """
    data = as_sorted_keys(data)
    if len(buf) < _HEAD.size:
        raise CorruptFile("index file truncated")
    magic, version, eps_leaf, eps_int, n, height = _HEAD.unpack_from(buf, 0)
    if magic != MAGIC:
        raise CorruptFile(f"bad magic {magic!r}")
    if version != VERSION:
        raise CorruptFile(f"unsupported index version {version}")
    if n != len(data):
        raise CorruptFile(f"index built over {n} keys, data has {len(data)}")
    off = _HEAD.size
    levels = []
    for _ in range(height):
        if off + _LEVEL.size > len(buf):
            raise CorruptFile("index file truncated")
        m, kc = _LEVEL.unpack_from(buf, off)
        off += _LEVEL.size
        if off + 24 * m > len(buf):
            raise CorruptFile("index file truncated")
        fk = np.frombuffer(buf, "<u8", m, off).astype(np.uint64)
        sl = np.frombuffer(buf, "<f8", m, off + 8 * m).astype(np.float64)
        ic = np.frombuffer(buf, "<f8", m, off + 16 * m).astype(np.float64)
        off += 24 * m
        nan = np.full(m, np.nan)
        levels.append(PlaModel(fk, sl, ic, nan, nan.copy(), np.zeros(m, np.int64),
                               np.zeros(m, np.int64), eps_leaf, int(kc)))
    if off != len(buf):
        raise CorruptFile("trailing bytes after index")
    for lvl in levels[:-1]:
        lvl.epsilon = eps_int
    return PgmIndex(levels, eps_leaf, eps_int, n, data)


def load_index(path, data):
    with open(path, "rb") as f:
        return deserialize_index(f.read(), data)
