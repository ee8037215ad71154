"""Space/time auto-tuning of epsilon.

The leaf segment count is modelled as a power law ``m(eps) ~ a * eps**-b``.
Min-time mode looks for the smallest epsilon whose leaf fits a space budget,
steering a bracketing search with the model; min-space mode looks for the
largest epsilon whose measured query latency fits a time budget.
"""
import json
import math
import statistics
import time
from dataclasses import asdict, dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from numba import njit
from scipy.optimize import curve_fit

from .errors import DegenerateFit, InfeasibleBound, InsufficientSamples, NoisyMeasurement
from .index import as_sorted_keys, build_index, leaf_points
from .pla import build_pla_arrays

BYTES_PER_SEGMENT = 24
DEFAULT_BLOCK = 8


@dataclass
class CostModel:
    latency_c: float
    block_B: int = DEFAULT_BLOCK
    search_range: Tuple[int, int] = (8, 8)

    def __post_init__(self):
        lo, hi = self.search_range
        if lo < 1 or hi < lo:
            raise ValueError(f"bad search range {self.search_range}")

    @classmethod
    def for_keys(cls, n, latency_c, block_B=DEFAULT_BLOCK, lo=8):
        hi = max(1, n // 2)
        return cls(latency_c, block_B, (min(lo, hi), hi))


@dataclass
class PowerLawFit:
    a: float
    b: float
    mse_relative: float

    def segments(self, epsilon):
        return self.a * np.power(np.asarray(epsilon, dtype=np.float64), -self.b)


@dataclass
class TuneResult:
    epsilon_star: int
    achieved_space_bytes: int
    achieved_time_ns: float
    iterations: int
    trace: List[Tuple[int, float]] = field(default_factory=list)
    mode: str = ""
    bound: float = 0.0
    tol: float = 0.0
    fit: Optional[PowerLawFit] = None
    elapsed_s: float = 0.0

    def to_json(self):
        d = {
            "mode": self.mode,
            "bound": self.bound,
            "tol": self.tol,
            "epsilon_star": self.epsilon_star,
            "iterations": self.iterations,
            "achieved_space_bytes": self.achieved_space_bytes,
            "achieved_time_ns": None if math.isnan(self.achieved_time_ns) else self.achieved_time_ns,
            "elapsed_s": self.elapsed_s,
            "trace": [[int(e), float(v)] for e, v in self.trace],
            "fit": None if self.fit is None else asdict(self.fit),
        }
        return json.dumps(d, indent=2, allow_nan=False)


# --- model ---------------------------------------------------------------------


def _power(eps, a, b):
    return a * np.power(eps, -b)


def fit_powerlaw(samples):
    """Fit ``count = a * eps**-b`` to (epsilon, count) samples.

    A line through log-log points seeds Levenberg-Marquardt on the original
    scale, with residuals weighted by the counts so each sample contributes
    its relative error.
    """
    pts = sorted({int(e): float(c) for e, c in samples}.items())
    # duplicates collapse; three distinct epsilons pin down two parameters with a residual
    if len(pts) < 3:
        raise InsufficientSamples(f"need >= 3 distinct epsilons, got {len(pts)}")
    eps = np.array([p[0] for p in pts], dtype=np.float64)
    cnt = np.array([p[1] for p in pts], dtype=np.float64)
    if np.any(eps <= 0) or np.any(cnt <= 0):
        raise InsufficientSamples("epsilons and counts must be positive")
    slope, icpt = np.polyfit(np.log(eps), np.log(cnt), 1)
    b0, a0 = -slope, math.exp(icpt)
    if b0 <= 1e-9:
        raise DegenerateFit(f"counts do not decrease with epsilon (b = {b0:.3g})")
    try:
        (a, b), _ = curve_fit(_power, eps, cnt, p0=(a0, b0), sigma=cnt, method="lm", maxfev=10000)
    except RuntimeError:
        a, b = a0, b0
    if not (np.isfinite(a) and np.isfinite(b)) or a <= 0 or b <= 1e-9:
        raise DegenerateFit(f"fit gave a = {a!r}, b = {b!r}")
    rel = (_power(eps, a, b) - cnt) / cnt
    return PowerLawFit(float(a), float(b), float(np.mean(rel ** 2)))


def predict_space(fit, epsilon, bytes_per_segment=BYTES_PER_SEGMENT):
    """Bytes of all levels when every level shrinks by 2*eps: (2*eps*m - 1) / (2*eps - 1) segments."""
    m = max(1.0, float(fit.segments(epsilon)))
    e2 = 2.0 * epsilon
    return (e2 * m - 1.0) / (e2 - 1.0) * bytes_per_segment


def predict_time(model, fit, epsilon):
    """c * levels * log2(2*eps / B) with levels = 1 + log_{2 eps}(m) and a positive search term.

    Counting the leaf search as a level keeps the model increasing in eps
    whenever b <= 1; the bare log_{2 eps}(m) dips just before m reaches 2*eps.
    """
    m = max(1.0, float(fit.segments(epsilon)))
    levels = 1.0 + math.log(m) / math.log(2.0 * epsilon) if epsilon > 0.5 else 1.0
    search = max(math.log2(2.0 * epsilon / model.block_B), 1e-9)
    return model.latency_c * levels * search


# --- measurements --------------------------------------------------------------


class LeafSizer:
    """Builds the leaf PLA at a given epsilon and reports its byte size."""

    def __init__(self, keys, bytes_per_segment=BYTES_PER_SEGMENT):
        self.data = as_sorted_keys(keys)
        self.xs, self.ys = leaf_points(self.data.keys)
        self.bytes_per_segment = bytes_per_segment
        self.builds = 0

    @property
    def n(self):
        return len(self.data)

    def segments(self, epsilon):
        self.builds += 1
        return len(build_pla_arrays(self.xs, self.ys, int(epsilon), key_count=self.n))

    def space(self, epsilon):
        return self.segments(epsilon) * self.bytes_per_segment


def budget(search_range):
    lo, hi = search_range
    size = hi - lo + 1
    lg = max(1, math.ceil(math.log2(size))) if size > 1 else 1
    return lg + 2 * max(1, math.ceil(math.log2(max(2, math.log2(max(size, 2))))))


def min_time_tune(dataset, s_max, tol, search_range=None, bytes_per_segment=BYTES_PER_SEGMENT,
                  guesses=None):
    """Smallest epsilon in the search range whose leaf size is <= s_max + tol.

    Leaf size never grows with epsilon, so the answer is the left end of the
    feasible suffix. Three log-spaced probes seed the power-law fit; later
    guesses solve ``a * eps**-b * bytes = s_max`` and are pulled toward the
    bracket midpoint with weight i/G at the i-th of G guided guesses, after
    which the search bisects. A guard switches to bisection early whenever the
    probe budget could otherwise be exceeded.
    """
    t0 = time.perf_counter()
    sizer = dataset if isinstance(dataset, LeafSizer) else LeafSizer(dataset, bytes_per_segment)
    if search_range is None:
        search_range = (min(8, max(1, sizer.n // 2)), max(1, sizer.n // 2))
    lo, hi = int(search_range[0]), int(search_range[1])
    if tol <= 0:
        raise ValueError("tol must be positive")
    limit = s_max + tol
    cap = budget((lo, hi))
    G = guesses if guesses is not None else 2 * max(1, math.ceil(math.log2(max(2, math.log2(max(hi - lo + 1, 2))))))

    trace = []
    cache = {}

    def probe(e):
        if e not in cache:
            cache[e] = sizer.space(e)
            trace.append((e, cache[e]))
        return cache[e]

    # bracket: L infeasible (or lo - 1), R feasible (or hi + 1 if unknown)
    L, R = lo - 1, hi + 1

    def update(e):
        nonlocal L, R
        if probe(e) <= limit:
            R = min(R, e)
        else:
            L = max(L, e)

    # seed probes, log-spaced across the range
    if hi > lo:
        for q in (0.25, 0.5, 0.75):
            e = int(round(lo * (hi / lo) ** q))
            if L < e < R:
                update(e)
    fit = None
    i = 0
    while R - L > 1:
        mid = (L + R) // 2
        nxt = mid
        if i < G and len(cache) >= 3:
            # worst case after this probe the bracket keeps its larger side
            if len(trace) + 1 + math.ceil(math.log2(max(2, R - L))) <= cap:
                try:
                    fit = fit_powerlaw([(e, max(v / sizer.bytes_per_segment, 1e-3)) for e, v in trace])
                    guess = (fit.a * sizer.bytes_per_segment / s_max) ** (1.0 / fit.b)
                except (DegenerateFit, InsufficientSamples, OverflowError, ZeroDivisionError):
                    guess = mid
                i += 1
                w = i / G
                g = (1 - w) * guess + w * (L + R) / 2
                nxt = int(round(min(max(g, L + 1), R - 1)))
            else:
                i = G
        if nxt > hi:
            nxt = hi
        if nxt < lo:
            nxt = lo
        update(nxt)
    if R > hi:
        if probe(hi) > limit:
            raise InfeasibleBound(f"even epsilon = {hi} needs {probe(hi)} bytes > {limit}")
        R = hi
    eps_star = max(R, lo)
    space = probe(eps_star)
    if fit is None and len(cache) >= 3:
        try:
            fit = fit_powerlaw([(e, max(v / sizer.bytes_per_segment, 1e-3)) for e, v in trace])
        except (DegenerateFit, InsufficientSamples):
            fit = None
    return TuneResult(eps_star, int(space), float("nan"), len(trace), trace, "min-time",
                      float(s_max), float(tol), fit, time.perf_counter() - t0)


@njit(cache=True)
def _chase(nxt, steps):
    p = 0
    for _ in range(steps):
        p = nxt[p]
    return p


def measure_latency_c(size=1 << 22, steps=1 << 21, seed=0):
    """Mean ns per dependent load over a random cycle larger than the last-level cache."""
    rng = np.random.default_rng(seed)
    order = rng.permutation(size)
    nxt = np.empty(size, dtype=np.int64)
    nxt[order] = np.roll(order, -1)
    _chase(nxt, 1000)
    t = time.perf_counter()
    _chase(nxt, steps)
    return (time.perf_counter() - t) * 1e9 / steps


class LatencyMeter:
    """Mean query latency of a recursive index at a given leaf epsilon.

    A fixed seeded batch of present keys is reused for every epsilon; each
    measurement is the median of ``repeats`` timed passes.
    """

    def __init__(self, keys, query_batch=100_000, seed=0, repeats=3, epsilon_internal=4):
        if query_batch < 1:
            raise ValueError("query_batch must be positive")
        self.data = as_sorted_keys(keys)
        rng = np.random.default_rng(seed)
        self.queries = self.data.keys[rng.integers(0, len(self.data), query_batch)]
        self.repeats = repeats
        self.epsilon_internal = epsilon_internal
        self.last_spread = 0.0

    @property
    def n(self):
        return len(self.data)

    def index(self, epsilon):
        return build_index(self.data, int(epsilon), self.epsilon_internal)

    def runs(self, epsilon, repeats=None):
        idx = self.index(epsilon)
        idx.rank_batch(self.queries[:64])
        out = []
        for _ in range(repeats or self.repeats):
            t = time.perf_counter()
            idx.rank_batch(self.queries)
            out.append((time.perf_counter() - t) * 1e9 / len(self.queries))
        return out, idx

    def mean_ns(self, epsilon):
        runs, idx = self.runs(epsilon)
        self.last_spread = statistics.pstdev(runs) if len(runs) > 1 else 0.0
        return statistics.median(runs), idx


def min_space_tune(dataset, t_max, tol, query_batch=100_000, model=None, search_range=None,
                   seed=0, width=0.05, noise_retries=2):
    """Largest epsilon whose measured mean query time is <= t_max + tol.

    Starts at ``(B/2) * 2**(t_max/c)``, doubles or halves until the bound
    flips, then bisects geometrically until the bracket is narrower than
    ``width`` (relative), the point past which timing noise dominates.
    """
    t0 = time.perf_counter()
    if query_batch < 10_000:
        raise ValueError("query_batch must be >= 10000")
    if tol <= 0:
        raise ValueError("tol must be positive")
    meter = dataset if isinstance(dataset, LatencyMeter) else LatencyMeter(dataset, query_batch, seed)
    if model is None:
        model = CostModel.for_keys(meter.n, measure_latency_c())
    lo, hi = search_range or model.search_range
    limit = t_max + tol
    trace = []
    seen = {}

    def probe(e):
        e = int(min(max(e, lo), hi))
        if e not in seen:
            for attempt in range(noise_retries + 1):
                t, idx = meter.mean_ns(e)
                if meter.last_spread <= 3 * tol:
                    break
            else:
                raise NoisyMeasurement(f"timing spread {meter.last_spread:.1f} ns at eps={e} exceeds 3*tol")
            seen[e] = (t, idx.size_bytes())
            trace.append((e, t))
        return seen[e][0]

    e0 = (model.block_B / 2) * 2 ** min(t_max / model.latency_c, 62.0)
    e = int(min(max(round(e0), lo), hi))
    if probe(e) <= limit:
        good = e
        bad = None
        while good < hi:
            nxt = min(hi, good * 2)
            if probe(nxt) <= limit:
                good = nxt
            else:
                bad = nxt
                break
    else:
        bad = e
        good = None
        while bad > lo:
            nxt = max(lo, bad // 2)
            if probe(nxt) <= limit:
                good = nxt
                break
            bad = nxt
        if good is None:
            raise InfeasibleBound(f"even epsilon = {lo} takes {probe(lo):.1f} ns > {limit}")
    if bad is not None:
        while bad - good > max(1, width * good):
            mid = int(round(math.sqrt(good * bad)))
            mid = min(max(mid, good + 1), bad - 1)
            if probe(mid) <= limit:
                good = mid
            else:
                bad = mid
    t, space = seen[good]
    return TuneResult(good, int(space), float(t), len(trace), trace, "min-space",
                      float(t_max), float(tol), None, time.perf_counter() - t0)
