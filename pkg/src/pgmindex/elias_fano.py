"""Elias-Fano coding of monotone integer sequences and fixed-width bit packing.

Layout for m values below a universe n:

* ``l = floor(log2(n / m))`` low bits per value, packed LSB-first into
  64-bit words (value j occupies bits ``j*l .. j*l + l - 1``);
* the high parts ``v >> l`` in unary: value j sets bit ``(v_j >> l) + j`` of
  a bitvector of ``m + ((n - 1) >> l) + 1`` bits;
* a select sample (absolute bit position, 64 bits) for every 256th one,
  skipping the 0th, so a lookup scans a bounded number of words.
"""
from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import InvalidSequence

SELECT_STRIDE = 256
_ONE = np.uint64(1)
_BYTE_POP = np.array([bin(b).count("1") for b in range(256)], dtype=np.int64)
_BYTE_LOW = np.array([(b & -b).bit_length() - 1 if b else 8 for b in range(256)], dtype=np.int64)


@njit(cache=True, nogil=True, inline="always")
def popcount64(x):
    x = x - ((x >> np.uint64(1)) & np.uint64(0x5555555555555555))
    x = (x & np.uint64(0x3333333333333333)) + ((x >> np.uint64(2)) & np.uint64(0x3333333333333333))
    x = (x + (x >> np.uint64(4))) & np.uint64(0x0F0F0F0F0F0F0F0F)
    return np.int64((x * np.uint64(0x0101010101010101)) >> np.uint64(56))


@njit(cache=True, nogil=True, inline="always")
def select64(w, r):
    """Bit index of the r-th (0-based) set bit of w."""
    base = 0
    while True:
        byte = (w >> np.uint64(base)) & np.uint64(0xFF)
        c = _BYTE_POP[byte]
        if r < c:
            break
        r -= c
        base += 8
    byte = (w >> np.uint64(base)) & np.uint64(0xFF)
    for _ in range(r):
        byte &= byte - np.uint64(1)
    return base + _BYTE_LOW[byte]


@njit(cache=True, nogil=True)
def pack_bits_kernel(values, width, words):
    for j in range(values.shape[0]):
        v = np.uint64(values[j])
        bit = j * width
        wi = bit >> 6
        off = bit & 63
        words[wi] |= v << np.uint64(off)
        if off + width > 64:
            words[wi + 1] |= v >> np.uint64(64 - off)


@njit(cache=True, nogil=True, inline="always")
def read_bits_at(words, base, j, width):
    """The j-th ``width``-bit field (width < 64) of a packed array starting at word ``base``.

    Branch-free; always touches the following word, so ``words`` needs one
    word of padding past the last field.
    """
    bit = j * width
    wi = base + (bit >> 6)
    off = bit & 63
    lo = words[wi] >> np.uint64(off)
    hi = (words[wi + 1] << np.uint64(63 - off)) << np.uint64(1)
    return (lo | hi) & ((np.uint64(1) << np.uint64(width)) - np.uint64(1))


@njit(cache=True, nogil=True, inline="always")
def read_bits(words, j, width):
    """The j-th ``width``-bit field of an unpadded packed array."""
    if width == 0:
        return np.uint64(0)
    bit = j * width
    wi = bit >> 6
    off = bit & 63
    v = words[wi] >> np.uint64(off)
    if off + width > 64:
        v |= words[wi + 1] << np.uint64(64 - off)
    if width < 64:
        v &= (np.uint64(1) << np.uint64(width)) - np.uint64(1)
    return v


@njit(cache=True, nogil=True, inline="always")
def ef_access_at(low, loff, high, hoff, samples, soff, l, j):
    """Element j of an Elias-Fano sequence whose arrays start at the given offsets."""
    s = j // 256
    if s == 0:
        start = 0
        r = j
    else:
        start = samples[soff + s - 1]
        r = j - s * 256
    wi = start >> 6
    w = high[hoff + wi] & ~((np.uint64(1) << np.uint64(start & 63)) - np.uint64(1))
    while True:
        c = popcount64(w)
        if r < c:
            pos = wi * 64 + select64(w, r)
            break
        r -= c
        wi += 1
        w = high[hoff + wi]
    hi_part = np.uint64(pos - j)
    return np.int64((hi_part << np.uint64(l)) | read_bits_at(low, loff, j, l))


@njit(cache=True, nogil=True)
def ef_access(low, high, samples, l, j):
    return ef_access_at(low, 0, high, 0, samples, 0, l, j)


@njit(cache=True, nogil=True)
def ef_decode_all(low, high, l, m):
    out = np.empty(m, np.int64)
    j = 0
    for wi in range(high.shape[0]):
        w = high[wi]
        while w != np.uint64(0) and j < m:
            b = popcount64((w & (~w + np.uint64(1))) - np.uint64(1))
            out[j] = np.int64((np.uint64(wi * 64 + b - j) << np.uint64(l)) | read_bits(low, j, l))
            w &= w - np.uint64(1)
            j += 1
    return out


def bits_to_words(nbits):
    return np.zeros(max(1, (nbits + 63) // 64), dtype=np.uint64)


def pack_bits(values, width):
    """Pack nonnegative ints into ``width``-bit fields of uint64 words (LSB-first)."""
    words = bits_to_words(len(values) * width)
    if width:
        pack_bits_kernel(np.asarray(values, dtype=np.uint64), width, words)
    return words


def unpack_bits(words, width, count):
    return np.array([int(read_bits(words, j, width)) for j in range(count)], dtype=np.int64)


@dataclass(frozen=True)
class InterceptStore:
    low: np.ndarray
    high: np.ndarray
    samples: np.ndarray
    low_width: int
    count: int
    universe: int

    def __len__(self):
        return self.count

    def access(self, j):
        if not 0 <= j < self.count:
            raise IndexError(j)
        return int(ef_access(self.low, self.high, self.samples, self.low_width, j))

    def to_array(self):
        return ef_decode_all(self.low, self.high, self.low_width, self.count)

    @property
    def high_bits(self):
        return self.count + ((self.universe - 1) >> self.low_width) + 1

    @property
    def size_bits(self):
        return self.count * self.low_width + self.high_bits + 64 * len(self.samples)


def encode_intercepts(values, n):
    """Elias-Fano encode a nondecreasing sequence of integers in [0, n)."""
    v = np.asarray(values, dtype=np.int64)
    m = len(v)
    n = int(n)
    if m == 0:
        raise InvalidSequence("cannot encode an empty sequence")
    if n < 1 or v.min() < 0 or v.max() >= n:
        raise InvalidSequence(f"values must lie in [0, {n})")
    if m > 1 and np.any(v[1:] < v[:-1]):
        raise InvalidSequence("values must be nondecreasing")
    l = int(np.floor(np.log2(n / m))) if n > m else 0
    # guard float log on exact powers of two
    while l > 0 and (m << l) > n:
        l -= 1
    while (m << (l + 1)) <= n:
        l += 1
    # one spare word lets the branch-free reader run off the end
    low = np.append(pack_bits(v & ((1 << l) - 1), l), np.uint64(0))
    nbits = m + ((n - 1) >> l) + 1
    high = bits_to_words(nbits)
    pos = (v >> l) + np.arange(m, dtype=np.int64)
    np.bitwise_or.at(high, pos >> 6, np.left_shift(_ONE, (pos & 63).astype(np.uint64)))
    samples = np.ascontiguousarray(pos[SELECT_STRIDE::SELECT_STRIDE], dtype=np.int64)
    return InterceptStore(low, high, samples, l, m, n)


def access(store, j):
    return store.access(j)
