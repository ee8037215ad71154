"""Synthetic key generators and the binary dataset format.

File layout (little-endian): ``b"PGMD"`` | version u16 | count u64 | count sorted u64 keys.
"""
import struct
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import CorruptFile, InvalidSpec, UnsortedData
from .index import SortedKeys

MAGIC = b"PGMD"
VERSION = 1
_HEAD = struct.Struct("<4sHQ")
DISTRIBUTIONS = ("uniform", "zipf", "lognormal", "file")
LOGNORMAL_SCALE = 1e9


@dataclass(frozen=True)
class DatasetSpec:
    """``param`` is the universe size u (uniform), exponent s (zipf) or sigma (lognormal)."""
    distribution: str
    n: int
    seed: int = 0
    param: Optional[float] = None
    path: Optional[str] = None

    def validate(self):
        if self.distribution not in DISTRIBUTIONS:
            raise InvalidSpec(f"unknown distribution {self.distribution!r}")
        if self.distribution == "file":
            if not self.path:
                raise InvalidSpec("file datasets need a path")
            return self
        if int(self.n) < 1:
            raise InvalidSpec("n must be >= 1")
        if self.param is None or not self.param > 0:
            raise InvalidSpec(f"{self.distribution} needs a positive parameter")
        if self.distribution == "uniform" and not 1 <= self.param <= 2 ** 64:
            raise InvalidSpec("uniform universe must lie in [1, 2^64]")
        if self.distribution == "zipf" and self.param <= 0:
            raise InvalidSpec("zipf exponent must be positive")
        return self


def _zipf_values(rng, n, s):
    """n draws of value-ranks 1..V with P(v) proportional to v**-s (bounded support, any s > 0)."""
    support = max(2, n)
    w = 1.0 / np.arange(1, support + 1, dtype=np.float64) ** s
    cdf = np.cumsum(w)
    cdf /= cdf[-1]
    return np.searchsorted(cdf, rng.random(n), side="right").astype(np.uint64) + np.uint64(1)


def generate_keys(spec):
    spec.validate()
    if spec.distribution == "file":
        return load_dataset(spec.path).keys
    rng = np.random.default_rng(spec.seed)
    n = int(spec.n)
    if spec.distribution == "uniform":
        u = int(spec.param)
        if u == 2 ** 64:
            keys = rng.integers(0, 2 ** 64 - 1, n, dtype=np.uint64, endpoint=True)
        else:
            keys = rng.integers(0, u, n, dtype=np.uint64)
    elif spec.distribution == "zipf":
        keys = _zipf_values(rng, n, float(spec.param))
    else:
        samples = np.exp(rng.normal(0.0, float(spec.param), n)) * LOGNORMAL_SCALE
        keys = np.minimum(samples, 2.0 ** 64 - 2048).astype(np.uint64)
    keys.sort()
    return keys


def gen_dataset(spec, path=None):
    """Generate a dataset; written to ``path`` when given."""
    keys = generate_keys(spec)
    if path is not None:
        save_dataset(keys, path)
    return SortedKeys(keys)


def dataset_bytes(keys):
    keys = np.asarray(keys, dtype=np.uint64)
    return _HEAD.pack(MAGIC, VERSION, len(keys)) + keys.astype("<u8").tobytes()


def save_dataset(keys, path):
    if isinstance(keys, SortedKeys):
        keys = keys.keys
    keys = np.asarray(keys, dtype=np.uint64)
    if len(keys) > 1 and np.any(keys[1:] < keys[:-1]):
        raise UnsortedData("refusing to save unsorted keys")
    with open(path, "wb") as f:
        f.write(dataset_bytes(keys))


def parse_dataset(buf):
    if len(buf) < _HEAD.size:
        raise CorruptFile("dataset file shorter than its header")
    magic, version, count = _HEAD.unpack_from(buf, 0)
    if magic != MAGIC:
        raise CorruptFile(f"bad magic {magic!r}")
    if version != VERSION:
        raise CorruptFile(f"unsupported dataset version {version}")
    if len(buf) != _HEAD.size + 8 * count:
        raise CorruptFile(f"header promises {count} keys, file holds {(len(buf) - _HEAD.size) / 8:g}")
    keys = np.frombuffer(buf, "<u8", count, _HEAD.size).astype(np.uint64)
    if count > 1:
        bad = np.flatnonzero(keys[1:] < keys[:-1])
        if len(bad):
            raise UnsortedData(f"key {int(bad[0]) + 1} is smaller than its predecessor")
    return SortedKeys(keys)


def load_dataset(path):
    with open(path, "rb") as f:
        return parse_dataset(f.read())
