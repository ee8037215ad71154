"""Plain vs compressed index sizes and query latency per epsilon."""
import argparse
import time

import numpy as np

from pgmindex import build_compressed, build_index
from pgmindex.datasets import DatasetSpec, generate_keys


def mean_ns(index, queries):
    index.rank_batch(queries[:64])
    t = time.perf_counter()
    index.rank_batch(queries)
    return (time.perf_counter() - t) * 1e9 / len(queries)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=1_000_000)
    ap.add_argument("--dist", default="lognormal", choices=["uniform", "lognormal", "zipf"])
    ap.add_argument("--param", type=float, default=1.0)
    ap.add_argument("--queries", type=int, default=200_000)
    args = ap.parse_args()
    keys = generate_keys(DatasetSpec(args.dist, args.n, 0, args.param))
    q = keys[np.random.default_rng(1).integers(0, len(keys), args.queries)]
    print("epsilon,plain_bytes,compressed_bytes,saving_pct,plain_ns,compressed_ns")
    for eps in (16, 64, 256, 1024):
        idx = build_index(keys, eps)
        comp = build_compressed(idx)
        saving = 100.0 * (1 - comp.size_bytes() / idx.size_bytes())
        print(f"{eps},{idx.size_bytes()},{comp.size_bytes()},{saving:.1f},"
              f"{mean_ns(idx, q):.0f},{mean_ns(comp, q):.0f}")


if __name__ == "__main__":
    main()
