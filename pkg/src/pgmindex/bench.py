"""Benchmark harness and the greedy-vs-optimal savings report.

CSV columns (fixed order): index_name, epsilon, build_ms, index_bytes,
mean_query_ns, p99_query_ns, mean_abs_err, segments_per_level.
``p99_query_ns`` is the 99th percentile of per-query time over chunks of
``CHUNK`` consecutive queries; ``segments_per_level`` is root-to-leaf,
``;``-separated.
"""
import csv
import io
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, fields

import numpy as np

from .baselines import INDEX_KINDS, BinarySearchIndex
from .errors import ConfigError, PgmError
from .index import as_sorted_keys, leaf_points
from .pla import build_pla_arrays

CHUNK = 2048
THREADS_ENV = "PGM_THREADS"


class BenchMismatch(PgmError, AssertionError):
    """An index disagreed with the binary-search baseline."""


@dataclass
class BenchRecord:
    index_name: str
    epsilon: int
    build_ms: float
    index_bytes: int
    mean_query_ns: float
    p99_query_ns: float
    mean_abs_err: float
    segments_per_level: str


CSV_COLUMNS = [f.name for f in fields(BenchRecord)]


def thread_count():
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        t = int(raw)
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    if t < 1:
        raise ConfigError(f"{THREADS_ENV} must be >= 1")
    return t


def make_queries(keys, count, seed=0, miss_heavy=False):
    """Uniform over stored keys, or uniform over [min, max] when ``miss_heavy``."""
    rng = np.random.default_rng(seed)
    keys = as_sorted_keys(keys).keys
    if miss_heavy:
        lo, hi = int(keys[0]), int(keys[-1])
        return rng.integers(lo, hi, count, dtype=np.uint64, endpoint=True)
    return keys[rng.integers(0, len(keys), count)]


def leaf_errors(leaf, queries, ranks):
    """|leaf prediction - rank| for each query, using the query-time arithmetic."""
    fk, sl, ic, size = leaf
    j = np.maximum(np.searchsorted(fk, queries, side="right") - 1, 0)
    f = fk[j]
    with np.errstate(over="ignore"):
        dx = np.where(queries >= f, (queries - f).astype(np.float64), -(f - queries).astype(np.float64))
    v = dx * sl[j] + ic[j]
    nxt = np.minimum(j + 1, len(fk) - 1)
    v = np.where(j + 1 < len(fk), np.minimum(v, ic[nxt]), v)
    pred = np.clip(np.floor(v), 0, size - 1)
    return np.abs(pred - ranks)


def _timed(index, queries, threads):
    """Run every chunk of queries, returning answers and per-chunk ns/query."""
    chunks = [queries[i:i + CHUNK] for i in range(0, len(queries), CHUNK)]

    def run(part):
        out, per = [], []
        for c in part:
            t = time.perf_counter_ns()
            out.append(index.rank_batch(c))
            per.append((time.perf_counter_ns() - t) / len(c))
        return out, per

    if threads == 1:
        out, per = run(chunks)
    else:
        slices = np.array_split(np.arange(len(chunks)), threads)
        with ThreadPoolExecutor(threads) as pool:
            res = list(pool.map(lambda s: run([chunks[i] for i in s]), slices))
        out = [o for r in res for o in r[0]]
        per = [p for r in res for p in r[1]]
    return np.concatenate(out), np.array(per)


def make_index(kind, keys, params):
    if kind not in INDEX_KINDS:
        raise ConfigError(f"unknown index kind {kind!r}; choose from {sorted(INDEX_KINDS)}")
    cls = INDEX_KINDS[kind]
    params = dict(params or {})
    try:
        if kind == "binary":
            return cls(keys)
        return cls(keys, **params)
    except TypeError as exc:
        raise ConfigError(f"bad parameters for {kind}: {exc}") from None


def run_bench(keys, configs, query_count=100_000, seed=0, miss_heavy=False, threads=None):
    """Benchmark each (kind, params) config on one shared query stream.

    Every answer is checked against whole-array binary search; any mismatch
    raises :class:`BenchMismatch`.
    """
    data = as_sorted_keys(keys)
    if len(data) == 0:
        raise ConfigError("cannot benchmark an empty key set")
    threads = thread_count() if threads is None else threads
    queries = make_queries(data, query_count, seed, miss_heavy)
    baseline = BinarySearchIndex(data)
    baseline.rank_batch(queries[:8])
    expected = baseline.rank_batch(queries)
    records = []
    for kind, params in configs:
        t = time.perf_counter()
        idx = make_index(kind, data, params)
        build_ms = (time.perf_counter() - t) * 1e3
        idx.rank_batch(queries[:8])  # compile outside the timed region
        got, per = _timed(idx, queries, threads)
        if not np.array_equal(got, expected):
            bad = int(np.flatnonzero(got != expected)[0])
            raise BenchMismatch(f"{kind} answered rank({int(queries[bad])}) = {int(got[bad])}, "
                                f"expected {int(expected[bad])}")
        mae = float(np.mean(leaf_errors(idx.leaf_model(), queries, expected))) \
            if hasattr(idx, "leaf_model") else 0.0
        records.append(BenchRecord(kind, int(getattr(idx, "epsilon", 0)), build_ms, int(idx.size_bytes()),
                                   float(np.mean(per)), float(np.percentile(per, 99)), mae,
                                   ";".join(str(c) for c in idx.segments_per_level())))
    return records


def records_to_csv(records, fh=None):
    out = fh or io.StringIO()
    w = csv.writer(out)
    w.writerow(CSV_COLUMNS)
    for r in records:
        d = asdict(r)
        w.writerow([d[c] for c in CSV_COLUMNS])
    return out.getvalue() if fh is None else None


@dataclass
class SavingsRow:
    epsilon: int
    m_opt: int
    m_greedy: int
    saving_pct: float
    m_over_n: float


SAVINGS_COLUMNS = [f.name for f in fields(SavingsRow)]


def report_savings(keys, epsilons):
    """Leaf segment counts of the optimal and greedy builders per epsilon."""
    data = as_sorted_keys(keys)
    xs, ys = leaf_points(data.keys)
    rows = []
    for e in epsilons:
        m_opt = len(build_pla_arrays(xs, ys, int(e), key_count=len(data)))
        m_gr = len(build_pla_arrays(xs, ys, int(e), method="greedy", key_count=len(data)))
        rows.append(SavingsRow(int(e), m_opt, m_gr, 100.0 * (m_gr - m_opt) / m_gr, m_opt / len(data)))
    return rows


def savings_to_csv(rows, fh=None):
    out = fh or io.StringIO()
    w = csv.writer(out)
    w.writerow(SAVINGS_COLUMNS)
    for r in rows:
        d = asdict(r)
        w.writerow([d[c] for c in SAVINGS_COLUMNS])
    return out.getvalue() if fh is None else None
