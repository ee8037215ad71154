"""Compiled segmentation kernels.

Coordinates inside a segment are local: ``dx = key - first_key`` as float64,
so cross products stay exact while ``dx * dy < 2**53``.
"""
import numpy as np
from numba import njit

SINGLE_POINT_SLOPE_HI = float(2 ** 53)


@njit(cache=True, nogil=True)
def _slope_lt(ax, ay, bx, by, cx, cy, dx, dy):
    # slope(a->b) < slope(c->d); both runs have positive dx
    return (by - ay) * (dx - cx) < (dy - cy) * (bx - ax)


@njit(cache=True, nogil=True)
def _cross(ox, oy, ax, ay, bx, by):
    return (ax - ox) * (by - oy) - (ay - oy) * (bx - ox)


@njit(cache=True, nogil=True)
def optimal_pla_kernel(xs, ys, tols):
    """One left-to-right pass of the convex-hull segmentation.

    ``xs`` must be strictly increasing. Returns per-segment arrays
    (start, count, slope_lo, slope_hi, slope, intercept) with intercepts in
    local coordinates.
    """
    n = xs.shape[0]
    starts = np.empty(n, np.int64)
    counts = np.empty(n, np.int64)
    s_lo = np.empty(n, np.float64)
    s_hi = np.empty(n, np.float64)
    slopes = np.empty(n, np.float64)
    intercepts = np.empty(n, np.float64)

    ux = np.empty(n, np.float64)
    uy = np.empty(n, np.float64)
    lx = np.empty(n, np.float64)
    ly = np.empty(n, np.float64)

    m = 0
    i = 0
    while i < n:
        x0 = xs[i]
        starts[m] = i
        ux[0] = 0.0
        uy[0] = ys[i] + tols[i]
        lx[0] = 0.0
        ly[0] = ys[i] - tols[i]
        u_len = 1
        l_len = 1
        u_start = 0
        l_start = 0
        # rectangle: r0/r2 span the min-slope line, r1/r3 the max-slope line
        r0x = 0.0
        r0y = uy[0]
        r1x = 0.0
        r1y = ly[0]
        r2x = 0.0
        r2y = 0.0
        r3x = 0.0
        r3y = 0.0
        count = 1
        i += 1
        while i < n:
            px = float(xs[i] - x0)
            p1y = ys[i] + tols[i]
            p2y = ys[i] - tols[i]
            if count == 1:
                r2x = px
                r2y = p2y
                r3x = px
                r3y = p1y
                ux[u_len] = px
                uy[u_len] = p1y
                u_len += 1
                lx[l_len] = px
                ly[l_len] = p2y
                l_len += 1
                count = 2
                i += 1
                continue
            # p1 below the min-slope line or p2 above the max-slope line
            if _slope_lt(r2x, r2y, px, p1y, r0x, r0y, r2x, r2y):
                break
            if _slope_lt(r1x, r1y, r3x, r3y, r3x, r3y, px, p2y):
                break

            lower_max = _slope_lt(r1x, r1y, px, p1y, r1x, r1y, r3x, r3y)
            raise_min = _slope_lt(r0x, r0y, r2x, r2y, r0x, r0y, px, p2y)
            if lower_max:
                best = l_start
                for k in range(l_start + 1, l_len):
                    if _slope_lt(lx[best], ly[best], px, p1y, lx[k], ly[k], px, p1y):
                        break
                    best = k
                n_r1x = lx[best]
                n_r1y = ly[best]
                l_start_new = best
            if raise_min:
                best = u_start
                for k in range(u_start + 1, u_len):
                    if _slope_lt(ux[k], uy[k], px, p2y, ux[best], uy[best], px, p2y):
                        break
                    best = k
                r0x = ux[best]
                r0y = uy[best]
                r2x = px
                r2y = p2y
                u_start = best
            if lower_max:
                r1x = n_r1x
                r1y = n_r1y
                r3x = px
                r3y = p1y
                l_start = l_start_new

            end = u_len
            while end >= u_start + 2 and _cross(ux[end - 2], uy[end - 2], ux[end - 1], uy[end - 1], px, p1y) <= 0:
                end -= 1
            ux[end] = px
            uy[end] = p1y
            u_len = end + 1
            end = l_len
            while end >= l_start + 2 and _cross(lx[end - 2], ly[end - 2], lx[end - 1], ly[end - 1], px, p2y) >= 0:
                end -= 1
            lx[end] = px
            ly[end] = p2y
            l_len = end + 1

            count += 1
            i += 1

        counts[m] = count
        if count == 1:
            s_lo[m] = 0.0
            s_hi[m] = SINGLE_POINT_SLOPE_HI
            slopes[m] = 1.0
            intercepts[m] = ys[starts[m]]
        else:
            lo = (r2y - r0y) / (r2x - r0x)
            hi = (r3y - r1y) / (r3x - r1x)
            s_lo[m] = lo
            s_hi[m] = hi
            s = 0.5 * (max(lo, 0.0) + hi)
            if s < 0.0:
                s = 0.0
            slopes[m] = s
            # center the band of feasible intercepts for this slope
            a = -np.inf
            for k in range(l_len):
                v = ly[k] - s * lx[k]
                if v > a:
                    a = v
            b = np.inf
            for k in range(u_len):
                v = uy[k] - s * ux[k]
                if v < b:
                    b = v
            intercepts[m] = 0.5 * (a + b)
        m += 1

    return (starts[:m].copy(), counts[:m].copy(), s_lo[:m].copy(), s_hi[:m].copy(),
            slopes[:m].copy(), intercepts[:m].copy())


@njit(cache=True, nogil=True)
def greedy_pla_kernel(xs, ys, eps):
    """Shrinking-cone segmentation anchored at each segment's first point."""
    n = xs.shape[0]
    starts = np.empty(n, np.int64)
    counts = np.empty(n, np.int64)
    s_lo = np.empty(n, np.float64)
    s_hi = np.empty(n, np.float64)
    slopes = np.empty(n, np.float64)
    intercepts = np.empty(n, np.float64)
    m = 0
    i = 0
    while i < n:
        x0 = xs[i]
        y0 = ys[i]
        starts[m] = i
        lo = -np.inf
        hi = np.inf
        count = 1
        i += 1
        while i < n:
            dx = float(xs[i] - x0)
            dy = ys[i] - y0
            s = dy / dx
            if s < lo or s > hi:
                break
            a = (dy - eps) / dx
            b = (dy + eps) / dx
            if a > lo:
                lo = a
            if b < hi:
                hi = b
            count += 1
            i += 1
        counts[m] = count
        if count == 1:
            s_lo[m] = 0.0
            s_hi[m] = SINGLE_POINT_SLOPE_HI
            slopes[m] = 1.0
        else:
            s_lo[m] = lo
            s_hi[m] = hi
            s = 0.5 * (max(lo, 0.0) + hi)
            slopes[m] = s if s > 0.0 else 0.0
        intercepts[m] = y0
        m += 1
    return (starts[:m].copy(), counts[:m].copy(), s_lo[:m].copy(), s_hi[:m].copy(),
            slopes[:m].copy(), intercepts[:m].copy())


@njit(cache=True, nogil=True)
def intercept_band_kernel(xs, ys, tols, starts, counts, slopes):
    """For each segment and its slope, the interval of feasible local intercepts."""
    m = starts.shape[0]
    lo_b = np.empty(m, np.float64)
    hi_b = np.empty(m, np.float64)
    for j in range(m):
        s = slopes[j]
        a = -np.inf
        b = np.inf
        x0 = xs[starts[j]]
        for i in range(starts[j], starts[j] + counts[j]):
            r = ys[i] - s * float(xs[i] - x0)
            if r - tols[i] > a:
                a = r - tols[i]
            if r + tols[i] < b:
                b = r + tols[i]
        lo_b[j] = a
        hi_b[j] = b
    return lo_b, hi_b


@njit(cache=True, nogil=True)
def max_error_kernel(xs, ys, starts, counts, first_keys, slopes, intercepts, size):
    """Per-point |floor(prediction) - position| using the query-time arithmetic."""
    out = np.empty(xs.shape[0], np.float64)
    for j in range(starts.shape[0]):
        fk = first_keys[j]
        for i in range(starts[j], starts[j] + counts[j]):
            v = float(xs[i] - fk) * slopes[j] + intercepts[j]
            if v < 0.0:
                p = 0.0
            elif v > size - 1:
                p = float(size - 1)
            else:
                p = np.floor(v)
            out[i] = abs(p - ys[i])
    return out


@njit(cache=True, nogil=True, inline="always")
def local_predict(k, fk, slope, intercept):
    if k >= fk:
        dx = float(k - fk)
    else:
        dx = -float(fk - k)
    return dx * slope + intercept


@njit(cache=True, nogil=True, inline="always")
def clamp_floor(v, size):
    if v <= 0.0:
        return 0
    if v >= size - 1:
        return size - 1
    return np.int64(np.floor(v))


@njit(cache=True, nogil=True)
def upper_bound(arr, lo, hi, k):
    """First index in [lo, hi] with arr[i] > k, or hi + 1."""
    a = lo
    b = hi + 1
    while a < b:
        mid = (a + b) >> 1
        if arr[mid] <= k:
            a = mid + 1
        else:
            b = mid
    return a


@njit(cache=True, nogil=True)
def lower_bound(arr, lo, hi, k):
    """First index in [lo, hi] with arr[i] >= k, or hi + 1."""
    a = lo
    b = hi + 1
    while a < b:
        mid = (a + b) >> 1
        if arr[mid] < k:
            a = mid + 1
        else:
            b = mid
    return a


@njit(cache=True, nogil=True)
def window_upper(arr, size, lo, hi, pred, k):
    """Upper bound confined to [lo, hi]; falls back to the whole array if the
    neighbours outside the window contradict the result. Returns (pos, window).

    ``pred`` estimates ``pos - 1``; when it is exact the window is 1.
    """
    if arr[pred] <= k and (pred + 1 == size or arr[pred + 1] > k):
        return pred + 1, 1
    u = upper_bound(arr, lo, hi, k)
    if (u == lo and lo > 0 and arr[lo - 1] > k) or (u == hi + 1 and hi + 1 < size and arr[hi + 1] <= k):
        return upper_bound(arr, 0, size - 1, k), size
    return u, hi - lo + 1


@njit(cache=True, nogil=True)
def window_lower(arr, size, lo, hi, pred, k):
    """Lower-bound counterpart of :func:`window_upper`; ``pred`` estimates ``pos``."""
    if arr[pred] >= k and (pred == 0 or arr[pred - 1] < k):
        return pred, 1
    u = lower_bound(arr, lo, hi, k)
    if (u == lo and lo > 0 and arr[lo - 1] >= k) or (u == hi + 1 and hi + 1 < size and arr[hi + 1] < k):
        return lower_bound(arr, 0, size - 1, k), size
    return u, hi - lo + 1


@njit(cache=True, nogil=True)
def pgm_rank_kernel(queries, data, fk, sl, ic, lvl_off, eps, n):
    """Rank of every query through a root-to-leaf walk of the flattened levels.

    Returns ranks, the leaf window size and the widest internal window per query.
    """
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
            g = base + j
            v = local_predict(k, fk[g], sl[g], ic[g])
            if base + j + 1 < lvl_off[l + 1] and v > ic[g + 1]:
                v = ic[g + 1]
            if l + 1 < levels:
                size = lvl_off[l + 2] - lvl_off[l + 1]
            else:
                size = n
            pred = clamp_floor(v, size)
            e = eps[l]
            lo = max(0, pred - e)
            hi = min(size - 1, pred + e)
            if l + 1 < levels:
                child = fk[lvl_off[l + 1]:lvl_off[l + 2]]
                u, w = window_upper(child, size, lo, hi, pred, k)
                if w > inner_w[q]:
                    inner_w[q] = w
                j = u - 1 if u > 0 else 0
            else:
                r, w = window_lower(data, n, lo, hi, pred, k)
                ranks[q] = r
                leaf_w[q] = w
    return ranks, leaf_w, inner_w
