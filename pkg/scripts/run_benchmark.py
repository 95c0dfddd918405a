"""Compare the multi-phase solver with the Sinkhorn-balanced baseline on a corpus.

    python3 scripts/make_corpus.py natural out/natural
    python3 scripts/run_benchmark.py out/natural --csv out/natural.csv
"""
from __future__ import annotations

import argparse
import csv
import os

from jigsaw_rl.cli import BENCH_FIELDS, WORKERS_ENV, bench
from jigsaw_rl.solver import SolverConfig


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("corpus")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--repeats", type=int, default=10)
    ap.add_argument("--csv", help="also write both tables here, with a solver column")
    args = ap.parse_args()

    workers = int(os.environ.get(WORKERS_ENV, "1"))
    config = SolverConfig(seed=args.seed)
    tables = {s: bench(args.corpus, config, args.repeats, s, workers) for s in ("multiphase", "balanced")}

    print(f"{'bundle':<14}{'solver':<12}{'DC':>8}{'NC':>8}{'PR':>6}{'sec':>8}")
    for solver, rows in tables.items():
        for r in rows:
            fmt = lambda v, w, p: f"{v:>{w}.{p}f}" if isinstance(v, float) else f"{v!s:>{w}}"
            print(f"{r['bundle']:<14}{solver:<12}{fmt(r['dc'], 8, 3)}{fmt(r['nc'], 8, 3)}"
                  f"{fmt(r['pr'], 6, 1)}{fmt(r['seconds'], 8, 1)}")
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=("solver",) + BENCH_FIELDS)
            w.writeheader()
            for solver, rows in tables.items():
                w.writerows({"solver": solver, **r} for r in rows)


if __name__ == "__main__":
    main()
