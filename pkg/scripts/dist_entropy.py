"""Expected probe cost of the distribution-aware index vs query entropy (Zipf workloads)."""
import argparse

import numpy as np

from pgmindex import build_dist_aware, build_index, expected_cost_report
from pgmindex.dist_aware import zipf_probabilities


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=100_000)
    ap.add_argument("--eps", type=int, default=256)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    keys = np.unique(rng.integers(0, 2 ** 48, args.n * 2, dtype=np.uint64))[: args.n]
    plain = build_index(keys, args.eps)
    _, plain_w, _ = plain.rank_batch(keys, with_windows=True)
    print("zipf_s,entropy_bits,expected_cost,leaf_cost,plain_leaf_cost,leaf_segments,plain_segments")
    for s in (0.0, 0.5, 1.0, 1.5, 2.0):
        p = zipf_probabilities(len(keys), s, seed=1) if s > 0 else np.full(len(keys), 1 / len(keys))
        idx = build_dist_aware(keys, args.eps, probs=p)
        cost, h = expected_cost_report(idx, (keys, p))
        _, w = idx.rank_batch(keys, with_windows=True)
        leaf = float(np.sum(p * np.log2(w[:, -1])))
        plain_leaf = float(np.sum(p * np.log2(plain_w)))
        print(f"{s},{h:.2f},{cost:.2f},{leaf:.2f},{plain_leaf:.2f},{len(idx.levels[-1])},{len(plain.levels[-1])}")


if __name__ == "__main__":
    main()
