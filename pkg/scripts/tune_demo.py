"""Run the min-time tuner over a few space budgets and show each probe sequence."""
import argparse

from pgmindex.datasets import DatasetSpec, generate_keys
from pgmindex.tuner import LeafSizer, budget, min_time_tune


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=1_000_000)
    ap.add_argument("--dist", default="lognormal", choices=["uniform", "lognormal", "zipf"])
    ap.add_argument("--param", type=float, default=1.0)
    ap.add_argument("--tol", type=float, default=1024)
    args = ap.parse_args()
    keys = generate_keys(DatasetSpec(args.dist, args.n, 0, args.param))
    sizer = LeafSizer(keys)
    rng = (8, args.n // 2)
    print(f"search range {rng}, probe budget {budget(rng)}")
    for kib in (16, 64, 256, 1024):
        r = min_time_tune(sizer, kib * 1024, args.tol, rng)
        probes = " ".join(f"{e}:{int(v)}" for e, v in r.trace)
        print(f"s_max={kib}K eps*={r.epsilon_star} bytes={r.achieved_space_bytes} "
              f"probes={r.iterations} [{probes}]")
        if r.fit is not None:
            print(f"    fit a={r.fit.a:.4g} b={r.fit.b:.3f} mse={r.fit.mse_relative:.3%}")


if __name__ == "__main__":
    main()
