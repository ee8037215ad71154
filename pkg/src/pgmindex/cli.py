"""Command-line workbench: ``pgm <subcommand> ...``.

Exit codes: 0 success, 1 benchmark mismatch, 2 bad input or configuration.
"""
import argparse
import json
import sys

import numpy as np

from . import bench, datasets, tuner
from .compression import build_compressed
from .errors import PgmError
from .index import build_index, load_index

DEFAULT_EPS = [8, 16, 32, 64, 128, 256, 512, 1024, 2048]


def _int_list(text):
    try:
        return [int(v) for v in text.split(",") if v]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _size(text):
    """Byte count with an optional K/M/G (binary) suffix."""
    units = {"k": 1 << 10, "m": 1 << 20, "g": 1 << 30}
    t = text.strip().lower().removesuffix("ib").removesuffix("b")
    mult = units.get(t[-1:], 1)
    if t[-1:] in units:
        t = t[:-1]
    try:
        return float(t) * mult
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad size {text!r}") from None


def _write(text, path):
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w", newline="") as f:
            f.write(text)


def cmd_gen(args):
    param = args.param
    if param is None:
        param = {"uniform": 2.0 ** 64, "zipf": 1.0, "lognormal": 1.0}.get(args.distribution)
    spec = datasets.DatasetSpec(args.distribution, args.n, args.seed, param, args.input)
    keys = datasets.gen_dataset(spec, args.output)
    print(f"wrote {len(keys)} keys to {args.output}", file=sys.stderr)
    return 0


def cmd_build(args):
    data = datasets.load_dataset(args.data)
    idx = build_index(data, args.epsilon, args.epsilon_internal)
    idx.save(args.output)
    json.dump({**idx.stats(), "bytes": idx.size_bytes()}, sys.stdout)
    print()
    return 0


def _read_queries(args):
    if args.keys:
        return np.array(args.keys, dtype=np.uint64)
    src = sys.stdin if args.queries in (None, "-") else open(args.queries)
    with src:
        return np.array([int(line) for line in src if line.strip()], dtype=np.uint64)


def cmd_query(args):
    data = datasets.load_dataset(args.data)
    idx = load_index(args.index, data)
    queries = _read_queries(args)
    ranks = idx.rank_batch(queries)
    keys = data.keys
    out = ["key,rank,member,predecessor"]
    for q, r in zip(queries.tolist(), ranks.tolist()):
        member = r < len(keys) and int(keys[r]) == q
        pred = int(keys[r - 1]) if r > 0 else ""
        out.append(f"{q},{r},{int(member)},{pred}")
    _write("\n".join(out) + "\n", args.output)
    return 0


def _configs(args):
    out = []
    for kind in args.indexes.split(","):
        if kind == "binary":
            out.append(("binary", {}))
            continue
        for e in args.epsilon:
            p = {"epsilon": e}
            if kind != "pgm_bin":
                p["epsilon_internal"] = args.epsilon_internal
            out.append((kind, p))
    return out


def cmd_bench(args):
    data = datasets.load_dataset(args.data)
    try:
        recs = bench.run_bench(data, _configs(args), args.queries, args.seed, args.miss_heavy)
    except bench.BenchMismatch as exc:
        print(f"correctness gate failed: {exc}", file=sys.stderr)
        return 1
    _write(bench.records_to_csv(recs), args.output)
    return 0


def cmd_savings(args):
    data = datasets.load_dataset(args.data)
    _write(bench.savings_to_csv(bench.report_savings(data, args.epsilon)), args.output)
    return 0


def cmd_compress(args):
    data = datasets.load_dataset(args.data)
    idx = build_index(data, args.epsilon, args.epsilon_internal)
    comp = build_compressed(idx)
    if args.output:
        comp.save(args.output)
    json.dump({"epsilon": args.epsilon, "uncompressed_bytes": idx.size_bytes(),
               "compressed_bytes": comp.size_bytes(),
               "saving_pct": 100.0 * (1 - comp.size_bytes() / idx.size_bytes())}, sys.stdout)
    print()
    return 0


def cmd_tune(args):
    data = datasets.load_dataset(args.data)
    rng = tuple(args.search_range) if args.search_range else None
    if args.mode == "min-time":
        res = tuner.min_time_tune(data, args.bound, args.tol, search_range=rng)
    else:
        res = tuner.min_space_tune(data, args.bound, args.tol, query_batch=args.query_batch,
                                   search_range=rng, seed=args.seed)
    _write(res.to_json() + "\n", args.output)
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="pgm", description="Learned-index workbench.")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a dataset file")
    g.add_argument("distribution", choices=datasets.DISTRIBUTIONS)
    g.add_argument("-n", type=int, default=1_000_000)
    g.add_argument("--param", type=float, help="universe u, zipf exponent s or lognormal sigma")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--input", help="source file for the 'file' distribution")
    g.add_argument("-o", "--output", required=True)
    g.set_defaults(func=cmd_gen)

    def eps_flags(sp, multi=False):
        if multi:
            sp.add_argument("-e", "--epsilon", type=_int_list, default=[64])
        else:
            sp.add_argument("-e", "--epsilon", type=int, default=64)
        sp.add_argument("--epsilon-internal", type=int, default=4)

    b = sub.add_parser("build", help="build and save a recursive index")
    b.add_argument("data")
    eps_flags(b)
    b.add_argument("-o", "--output", required=True)
    b.set_defaults(func=cmd_build)

    q = sub.add_parser("query", help="answer rank/member/predecessor queries")
    q.add_argument("data")
    q.add_argument("index")
    q.add_argument("keys", nargs="*", type=int)
    q.add_argument("--queries", help="file with one key per line ('-' for stdin)")
    q.add_argument("-o", "--output")
    q.set_defaults(func=cmd_query)

    be = sub.add_parser("bench", help="benchmark indexes against binary search (CSV)")
    be.add_argument("data")
    eps_flags(be, multi=True)
    be.add_argument("--indexes", default="binary,pgm_bin,pgm_css,pgm_rec,pgm_compressed")
    be.add_argument("--queries", type=int, default=100_000)
    be.add_argument("--seed", type=int, default=0)
    be.add_argument("--miss-heavy", action="store_true", help="draw queries over [min, max] instead of stored keys")
    be.add_argument("-o", "--output")
    be.set_defaults(func=cmd_bench)

    s = sub.add_parser("savings", help="optimal vs greedy segment counts (CSV)")
    s.add_argument("data")
    s.add_argument("-e", "--epsilon", type=_int_list, default=DEFAULT_EPS)
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_savings)

    c = sub.add_parser("compress", help="build a compressed index and report its size")
    c.add_argument("data")
    eps_flags(c)
    c.add_argument("-o", "--output")
    c.set_defaults(func=cmd_compress)

    t = sub.add_parser("tune", help="pick epsilon under a space or latency bound (JSON)")
    t.add_argument("data")
    t.add_argument("--mode", choices=["min-time", "min-space"], required=True)
    t.add_argument("--bound", type=_size, required=True, help="bytes (min-time, e.g. 64K) or ns (min-space)")
    t.add_argument("--tol", type=_size, required=True)
    t.add_argument("--search-range", type=int, nargs=2, metavar=("LO", "HI"))
    t.add_argument("--query-batch", type=int, default=100_000)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("-o", "--output")
    t.set_defaults(func=cmd_tune)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (PgmError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
