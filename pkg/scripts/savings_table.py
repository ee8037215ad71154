"""Optimal vs greedy leaf segment counts over an epsilon sweep."""
import argparse
import sys

from pgmindex.bench import report_savings, savings_to_csv
from pgmindex.datasets import DatasetSpec, generate_keys


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=1_000_000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--eps", default="8,16,32,64,128,256,512,1024,2048")
    args = ap.parse_args()
    eps = [int(e) for e in args.eps.split(",")]
    for dist, param in [("uniform", 2.0 ** 32), ("lognormal", 1.0), ("zipf", 1.0)]:
        keys = generate_keys(DatasetSpec(dist, args.n, args.seed, param))
        print(f"# {dist} n={args.n}")
        sys.stdout.write(savings_to_csv(report_savings(keys, eps)))


if __name__ == "__main__":
    main()
