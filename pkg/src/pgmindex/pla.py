"""Piecewise linear epsilon-approximation of sorted key sequences.

Two builders produce the same segmentation:

* :class:`OptimalPLA` consumes points one at a time with exact integer
  arithmetic (the streaming form, used by :func:`build_optimal_pla`);
* :func:`build_pla_arrays` runs the compiled kernel over numpy arrays and is
  what the index layers use.

Segments predict in local coordinates, ``(key - first_key) * slope + intercept``.
"""
from dataclasses import dataclass, field
from fractions import Fraction
from typing import NamedTuple, Optional, Tuple

import numpy as np

from . import _kernels
from .errors import EmptyInput, InvalidEpsilon, UnsortedData, check_epsilon

SINGLE_POINT_SLOPE_RANGE = (0.0, _kernels.SINGLE_POINT_SLOPE_HI)


class KeyPoint(NamedTuple):
    key: int
    position: int


@dataclass(frozen=True)
class Segment:
    first_key: int
    slope: float
    intercept: float
    slope_range: Tuple[float, float]
    covered_count: int = 1

    def predict(self, key, n=None):
        return segment_predict(self, key, n)


def segment_predict(s, key, n=None):
    """Floor of the segment's prediction for ``key``, clamped to ``[0, n-1]``."""
    v = (int(key) - int(s.first_key)) * s.slope + s.intercept
    if n is not None:
        if v <= 0:
            return 0
        if v >= n - 1:
            return n - 1
    return int(np.floor(v))


@dataclass
class PlaModel:
    """Ordered segments, stored column-wise.

    ``starts``/``covered`` index into the point sequence the model was built
    from; ``key_count`` is the size of the position range predictions are
    clamped into.
    """
    first_keys: np.ndarray
    slopes: np.ndarray
    intercepts: np.ndarray
    slope_lo: np.ndarray
    slope_hi: np.ndarray
    starts: np.ndarray
    covered: np.ndarray
    epsilon: int
    key_count: int
    tolerances: Optional[np.ndarray] = field(default=None, repr=False)

    def __len__(self):
        return len(self.first_keys)

    @property
    def segments(self):
        return [
            Segment(int(self.first_keys[j]), float(self.slopes[j]), float(self.intercepts[j]),
                    (float(self.slope_lo[j]), float(self.slope_hi[j])), int(self.covered[j]))
            for j in range(len(self))
        ]

    def responsible(self, key):
        """Index of the rightmost segment whose first key is <= ``key`` (0 below the range)."""
        j = int(np.searchsorted(self.first_keys, np.uint64(key), side="right")) - 1
        return max(j, 0)

    def predict(self, key):
        j = self.responsible(key)
        seg = Segment(int(self.first_keys[j]), float(self.slopes[j]), float(self.intercepts[j]),
                      (float(self.slope_lo[j]), float(self.slope_hi[j])))
        return segment_predict(seg, key, self.key_count)


# --- streaming builder -------------------------------------------------------


def _slope_lt(a, b, c, d):
    # slope(a->b) < slope(c->d), both with positive dx
    return (b[1] - a[1]) * (d[0] - c[0]) < (d[1] - c[1]) * (b[0] - a[0])


def _cross(o, a, b):
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


class OptimalPLA:
    """Incremental optimal segmentation over exact integer coordinates.

    Feed points with :meth:`add_point`; when it returns False the point does
    not fit, :meth:`segment` describes the closed segment and the caller
    re-adds the rejected point to open the next one.
    """

    def __init__(self, epsilon):
        self.epsilon = check_epsilon(epsilon)
        self.reset()

    def reset(self):
        self.count = 0
        self.first_key = None
        self.first_pos = None
        self.upper = []
        self.lower = []
        self.upper_start = 0
        self.lower_start = 0
        self.rect = [None] * 4

    def add_point(self, key, position, tolerance=None):
        tol = self.epsilon if tolerance is None else tolerance
        if self.count == 0:
            self.first_key = key
            self.first_pos = position
            p1, p2 = (0, position + tol), (0, position - tol)
            self.upper = [p1]
            self.lower = [p2]
            self.upper_start = self.lower_start = 0
            self.rect = [p1, p2, None, None]
            self.count = 1
            return True
        x = key - self.first_key
        if x <= 0:
            raise UnsortedData("keys must be strictly increasing inside a segment")
        p1, p2 = (x, position + tol), (x, position - tol)
        r = self.rect
        if self.count == 1:
            r[2], r[3] = p2, p1
            self.upper.append(p1)
            self.lower.append(p2)
            self.count = 2
            return True

        if _slope_lt(r[2], p1, r[0], r[2]) or _slope_lt(r[1], r[3], r[3], p2):
            return False

        lower_max = _slope_lt(r[1], p1, r[1], r[3])
        raise_min = _slope_lt(r[0], r[2], r[0], p2)
        if lower_max:
            best = self.lower_start
            for k in range(self.lower_start + 1, len(self.lower)):
                if _slope_lt(self.lower[best], p1, self.lower[k], p1):
                    break
                best = k
            new_r1, new_lower_start = self.lower[best], best
        if raise_min:
            best = self.upper_start
            for k in range(self.upper_start + 1, len(self.upper)):
                if _slope_lt(self.upper[k], p2, self.upper[best], p2):
                    break
                best = k
            r[0], r[2] = self.upper[best], p2
            self.upper_start = best
        if lower_max:
            r[1], r[3] = new_r1, p1
            self.lower_start = new_lower_start

        up = self.upper
        while len(up) >= self.upper_start + 2 and _cross(up[-2], up[-1], p1) <= 0:
            up.pop()
        up.append(p1)
        lo = self.lower
        while len(lo) >= self.lower_start + 2 and _cross(lo[-2], lo[-1], p2) >= 0:
            lo.pop()
        lo.append(p2)
        self.count += 1
        return True

    def slope_range(self):
        if self.count < 2:
            return Fraction(0), Fraction(2 ** 53)
        r = self.rect
        lo = Fraction(r[2][1] - r[0][1], r[2][0] - r[0][0])
        hi = Fraction(r[3][1] - r[1][1], r[3][0] - r[1][0])
        return lo, hi

    def segment(self):
        if self.count == 0:
            raise EmptyInput("no points in the current segment")
        if self.count == 1:
            return Segment(self.first_key, 1.0, float(self.first_pos), SINGLE_POINT_SLOPE_RANGE, 1)
        lo, hi = self.slope_range()
        s = (max(lo, 0) + hi) / 2
        s = max(s, Fraction(0))
        a = max(p[1] - s * p[0] for p in self.lower)
        b = min(p[1] - s * p[0] for p in self.upper)
        return Segment(self.first_key, float(s), float((a + b) / 2), (float(lo), float(hi)), self.count)


def _iter_points(points, ranged=False):
    """Normalise KeyPoint / tuple inputs; yields (key, position, tolerance)."""
    for p in points:
        if ranged:
            if len(p) == 2:
                (k, y), tol = p
            else:
                k, y, tol = p
            yield int(k), int(y), int(tol)
        else:
            k, y = p
            yield int(k), int(y), None


def _stream_build(point_iter, epsilon, ranged):
    builder = OptimalPLA(epsilon)
    segs, starts, tols = [], [], []
    prev_key = None
    max_pos = -1
    idx = 0
    for k, y, tol in point_iter:
        if ranged and tol < 1:
            raise InvalidEpsilon(f"tolerance must be >= 1, got {tol}")
        if prev_key is not None:
            if k < prev_key:
                raise UnsortedData(f"key {k} follows {prev_key}")
            if k == prev_key:
                continue
        prev_key = k
        max_pos = max(max_pos, y)
        tols.append(tol)
        if not builder.add_point(k, y, tol):
            segs.append(builder.segment())
            builder.reset()
            builder.add_point(k, y, tol)
            starts.append(idx)
        elif builder.count == 1:
            starts.append(idx)
        idx += 1
    if builder.count == 0:
        raise EmptyInput("cannot build a PLA model over no points")
    segs.append(builder.segment())
    model = _model_from_segments(segs, starts, epsilon, max_pos + 1)
    if ranged:
        model.tolerances = np.asarray(tols, dtype=np.float64)
    return model


def _model_from_segments(segs, starts, epsilon, key_count):
    return PlaModel(
        first_keys=np.array([s.first_key for s in segs], dtype=np.uint64),
        slopes=np.array([s.slope for s in segs], dtype=np.float64),
        intercepts=np.array([s.intercept for s in segs], dtype=np.float64),
        slope_lo=np.array([s.slope_range[0] for s in segs], dtype=np.float64),
        slope_hi=np.array([s.slope_range[1] for s in segs], dtype=np.float64),
        starts=np.asarray(starts, dtype=np.int64),
        covered=np.array([s.covered_count for s in segs], dtype=np.int64),
        epsilon=epsilon,
        key_count=key_count,
    )


def build_optimal_pla(points, epsilon):
    """Minimum-size epsilon-approximate PLA over an iterable of (key, position) points.

    Consumes ``points`` exactly once. Repeated keys keep their first position.
    """
    epsilon = check_epsilon(epsilon)
    return _stream_build(_iter_points(points), epsilon, ranged=False)


def build_optimal_pla_ranged(points):
    """Optimal PLA where every point carries its own tolerance.

    ``points`` yields ``(KeyPoint, tolerance)`` or ``(key, position, tolerance)``.
    The model's ``epsilon`` is the largest tolerance seen.
    """
    it = _iter_points(points, ranged=True)
    first = next(it, None)
    if first is None:
        raise EmptyInput("cannot build a PLA model over no points")
    max_tol = [first[2]]

    def chained():
        yield first
        for p in it:
            max_tol[0] = max(max_tol[0], p[2])
            yield p

    model = _stream_build(chained(), 1, ranged=True)
    if min(model.tolerances) < 1:
        raise InvalidEpsilon("tolerances must be >= 1")
    model.epsilon = int(max_tol[0])
    return model


def build_greedy_pla(points, epsilon):
    """Shrinking-cone baseline over an iterable of (key, position) points."""
    epsilon = check_epsilon(epsilon)
    pts = list(_iter_points(points))
    if not pts:
        raise EmptyInput("cannot build a PLA model over no points")
    keys = np.array([p[0] for p in pts], dtype=np.uint64)
    pos = np.array([p[1] for p in pts], dtype=np.int64)
    return build_pla_arrays(keys, pos, epsilon, method="greedy")


# --- array builders -----------------------------------------------------------


def dedup_points(keys, positions, tolerances=None):
    """Drop repeated keys, keeping the first position; checks sortedness."""
    keys = np.ascontiguousarray(keys, dtype=np.uint64)
    positions = np.asarray(positions)
    if len(keys) == 0:
        raise EmptyInput("cannot build a PLA model over no points")
    if len(keys) > 1:
        if np.any(keys[1:] < keys[:-1]):
            raise UnsortedData("keys must be nondecreasing")
        keep = np.empty(len(keys), dtype=bool)
        keep[0] = True
        np.not_equal(keys[1:], keys[:-1], out=keep[1:])
        if not keep.all():
            keys = keys[keep]
            positions = positions[keep]
            if tolerances is not None and np.ndim(tolerances):
                tolerances = np.asarray(tolerances)[keep]
    return keys, positions, tolerances


def build_pla_arrays(keys, positions, epsilon, tolerances=None, method="optimal", key_count=None):
    """Build a PLA model from parallel key/position arrays with the compiled kernels.

    ``tolerances`` (optional, per point) overrides ``epsilon`` for the
    ranged variant; ``method`` is ``"optimal"`` or ``"greedy"``.
    """
    epsilon = check_epsilon(epsilon)
    keys, positions, tolerances = dedup_points(keys, positions, tolerances)
    ys = np.ascontiguousarray(positions, dtype=np.float64)
    if tolerances is None:
        tols = np.full(len(keys), float(epsilon))
    else:
        tols = np.ascontiguousarray(np.broadcast_to(tolerances, (len(keys),)), dtype=np.float64)
        if np.any(tols < 1) or np.any(tols != np.floor(tols)):
            raise InvalidEpsilon("tolerances must be integers >= 1")
    if method == "optimal":
        out = _kernels.optimal_pla_kernel(keys, ys, tols)
    elif method == "greedy":
        if tolerances is not None:
            raise ValueError("the greedy builder has no ranged variant")
        out = _kernels.greedy_pla_kernel(keys, ys, float(epsilon))
    else:
        raise ValueError(f"unknown method {method!r}")
    starts, counts, lo, hi, slopes, intercepts = out
    if key_count is None:
        key_count = int(ys[-1]) + 1
    return PlaModel(
        first_keys=keys[starts],
        slopes=slopes,
        intercepts=intercepts,
        slope_lo=lo,
        slope_hi=hi,
        starts=starts,
        covered=counts,
        epsilon=int(epsilon if tolerances is None else max(epsilon, int(tols.max()))),
        key_count=int(key_count),
        tolerances=None if tolerances is None else tols,
    )


def model_errors(model, keys, positions):
    """Absolute floor-prediction error of every (deduplicated) point under its own segment."""
    keys, positions, _ = dedup_points(keys, positions)
    return _kernels.max_error_kernel(
        keys, np.asarray(positions, dtype=np.float64), model.starts, model.covered,
        model.first_keys, model.slopes, model.intercepts, model.key_count)


def verify_epsilon(model, points, tolerances=None):
    """True iff every point is predicted within its tolerance by its responsible segment."""
    if isinstance(points, tuple) and len(points) == 2 and isinstance(points[0], np.ndarray):
        keys, pos = points
    else:
        pts = [(int(k), int(y)) for k, y in points]
        keys = np.array([p[0] for p in pts], dtype=np.uint64)
        pos = np.array([p[1] for p in pts], dtype=np.int64)
    keys, pos, tolerances = dedup_points(keys, pos, tolerances)
    if tolerances is None:
        tolerances = model.tolerances if model.tolerances is not None else model.epsilon
    tol = np.broadcast_to(np.asarray(tolerances, dtype=np.float64), (len(keys),))
    seg = np.searchsorted(model.first_keys, keys, side="right") - 1
    seg = np.maximum(seg, 0)
    dx = np.where(keys >= model.first_keys[seg],
                  (keys - model.first_keys[seg]).astype(np.float64),
                  -(model.first_keys[seg] - keys).astype(np.float64))
    v = dx * model.slopes[seg] + model.intercepts[seg]
    pred = np.clip(np.floor(v), 0, model.key_count - 1)
    return bool(np.all(np.abs(pred - pos.astype(np.float64)) <= tol))
