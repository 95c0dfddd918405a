"""Command line front end: ``generate``, ``solve``, ``evaluate``, ``render``, ``bench``.

Exit codes: 0 success, 1 usage error, 2 input error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict
from pathlib import Path

import numpy as np
from PIL import Image

from .bundle import (Bundle, BundleError, SolutionRecord, atomic_write_bytes, generate,
                     read_solution, render, write_solution)
from .core import GridDims, PuzzleType
from .evaluation import Scores, evaluate
from .solver import SolverConfig, solve_balanced, solve_type1
from .type2 import solve_type2

log = logging.getLogger("jigsaw_rl")

WORKERS_ENV = "JIGSAW_RL_WORKERS"
SOLVERS = ("multiphase", "balanced")


def solve_bundle(bundle: Bundle, config: SolverConfig, solver: str = "multiphase",
                 trace=None) -> SolutionRecord:
    pieces = bundle.piece_set()
    dims = bundle.dims
    if solver == "balanced":
        if bundle.puzzle_type != PuzzleType.TYPE1:
            raise BundleError("the balanced baseline handles Type 1 bundles only")
        sol = solve_balanced(pieces, dims, config)
    elif bundle.puzzle_type == PuzzleType.TYPE1:
        sol = solve_type1(pieces, dims, config, trace=trace)
    else:
        sol = solve_type2(pieces, dims, config, trace=trace)
    cfg = asdict(config)
    del cfg["branch_workers"]       # affects speed only; keep solution bytes independent of it
    cfg["k"] = config.k_for(bundle.puzzle_type)
    cfg["solver"] = solver
    return SolutionRecord(dims.rows, dims.cols, int(bundle.puzzle_type),
                          [tuple(int(x) for x in p) for p in sol.placement],
                          float(sol.alc), cfg, _jsonable(sol.diagnostics))


def _jsonable(obj):
    return json.loads(json.dumps(obj, default=lambda o: o.item() if hasattr(o, "item") else str(o)))


def evaluate_solution(sol: SolutionRecord, bundle: Bundle) -> Scores:
    gt = bundle.ground_truth()
    if sol.dims != bundle.dims:
        raise BundleError(f"solution grid {sol.dims} does not match bundle grid {bundle.dims}")
    return evaluate(sol.placements, gt.placements, gt.dims, bundle.puzzle_type)


def _config(args) -> SolverConfig:
    return SolverConfig(epsilon=args.epsilon, alpha=args.alpha, k=args.k, measure=args.measure,
                        seed=args.seed, max_iter=args.max_iter, branch_workers=args.branch_workers)


def _add_run_config(p: argparse.ArgumentParser) -> None:
    p.add_argument("--epsilon", type=float, default=1e-4, help="ALC-increase convergence threshold")
    p.add_argument("--alpha", type=float, default=0.7, help="anchoring threshold")
    p.add_argument("--k", type=float, default=None,
                   help="compatibility percentile (default 3 for Type 1, 1.5 for Type 2)")
    p.add_argument("--measure", choices=("new", "andalo"), default="new")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-iter", type=int, default=1000, help="per-phase iteration cap")
    p.add_argument("--branch-workers", type=int, default=1,
                   help="threads for independent branches (output does not depend on it)")


def cmd_generate(args) -> int:
    b = generate(args.image, args.out, GridDims(args.rows, args.cols), args.piece_size,
                 args.type, args.seed, args.constant_tol)
    print(f"wrote {b.dims.n_positions} pieces to {b.root}")
    return 0


def cmd_solve(args) -> int:
    bundle = Bundle(args.bundle)
    config = _config(args)
    trace = open(args.trace, "w") if args.trace else None
    try:
        rec = solve_bundle(bundle, config, args.solver, trace)
    finally:
        if trace:
            trace.close()
    out = Path(args.out) if args.out else bundle.root / "solution.json"
    write_solution(out, rec)
    print(f"solved {bundle.root} -> {out} (ALC {rec.alc:.6g})")
    return 0


def cmd_evaluate(args) -> int:
    bundle = Bundle(args.bundle)
    sol = read_solution(args.solution)
    s = evaluate_solution(sol, bundle)
    record = {"bundle": str(bundle.root), "dc": s.dc, "nc": s.nc, "pr": s.pr, "rotation": s.rotation}
    if args.json:
        print(json.dumps(record, sort_keys=True))
    else:
        print(f"DC {s.dc:.4f}  NC {s.nc:.4f}  PR {s.pr}  (rotation {90 * s.rotation} deg)")
    return 0


def cmd_render(args) -> int:
    bundle = Bundle(args.bundle)
    if args.solution:
        placements = read_solution(args.solution).placements
    else:
        placements = bundle.ground_truth().placements
    img = render(placements, bundle.rgb_pieces(), bundle.dims)
    buf = io.BytesIO()
    Image.fromarray(img).save(buf, format="PNG")
    atomic_write_bytes(Path(args.out), buf.getvalue())
    print(f"rendered {args.out}")
    return 0


BENCH_FIELDS = ("bundle", "type", "rows", "cols", "constant_pieces", "runs", "dc", "nc", "pr",
                "alc", "phases", "seconds", "error")


def _bench_one(job):
    root, config, repeats, solver = job
    row = dict.fromkeys(BENCH_FIELDS, "")
    row["bundle"] = Path(root).name
    try:
        bundle = Bundle(root)
        m = bundle.manifest
        n_const = int(bundle.piece_set().constant_flags.sum())
        runs = repeats if n_const > 2 else 1
        row.update(type=m.puzzle_type, rows=m.rows, cols=m.cols, constant_pieces=n_const, runs=runs)
        dcs, ncs, prs, alcs, phases = [], [], [], [], []
        t0 = time.perf_counter()
        for r in range(runs):
            seed = int(np.random.SeedSequence((config.seed, r)).generate_state(1)[0]) if r else config.seed
            rec = solve_bundle(bundle, SolverConfig(**{**asdict(config), "seed": seed}), solver)
            s = evaluate_solution(rec, bundle)
            dcs.append(s.dc)
            ncs.append(s.nc)
            prs.append(float(s.pr))
            alcs.append(rec.alc)
            phases.append(rec.diagnostics.get("phases", 0))
        row.update(dc=float(np.mean(dcs)), nc=float(np.mean(ncs)), pr=float(np.mean(prs)),
                   alc=float(np.mean(alcs)), phases=float(np.mean(phases)),
                   seconds=round(time.perf_counter() - t0, 3))
    except (BundleError, ValueError, OSError) as exc:
        row["error"] = str(exc)
    return row


def bench(corpus: str | Path, config: SolverConfig, repeats: int = 10, solver: str = "multiphase",
          workers: int = 1) -> list[dict]:
    """Solve and score every bundle under ``corpus``; the last row aggregates the others."""
    if not Path(corpus).is_dir():
        raise BundleError(f"corpus directory {corpus} does not exist")
    roots = sorted(p.parent for p in Path(corpus).glob("*/manifest.json"))
    jobs = []
    for idx, root in enumerate(roots):
        cfg = SolverConfig(**{**asdict(config), "seed": config.seed ^ idx})
        jobs.append((str(root), cfg, repeats, solver))
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(workers) as pool:
            rows = list(pool.map(_bench_one, jobs))
    else:
        rows = [_bench_one(j) for j in jobs]
    ok = [r for r in rows if not r["error"]]
    if rows:
        agg = dict.fromkeys(BENCH_FIELDS, "")
        agg["bundle"] = "MEAN"
        if ok:
            agg.update(dc=float(np.mean([r["dc"] for r in ok])), nc=float(np.mean([r["nc"] for r in ok])),
                       pr=float(np.sum([r["pr"] for r in ok])), runs=len(ok))
        rows.append(agg)
    return rows


def cmd_bench(args) -> int:
    workers = int(os.environ.get(WORKERS_ENV, "1"))
    rows = bench(args.corpus, _config(args), args.repeats, args.solver, workers)
    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.DictWriter(fh, fieldnames=BENCH_FIELDS, delimiter=args.delimiter)
        w.writeheader()
        w.writerows(rows)
    finally:
        if args.out:
            fh.close()
    return 0


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="jigsaw-rl", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("generate", help="cut an image into a shuffled puzzle bundle")
    p.add_argument("image")
    p.add_argument("out")
    p.add_argument("--rows", type=int, required=True)
    p.add_argument("--cols", type=int, required=True)
    p.add_argument("--piece-size", type=int, default=28)
    p.add_argument("--type", type=int, choices=(1, 2), default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--constant-tol", type=float, default=0.5,
                   help="CIELAB spread below which a piece counts as constant")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("solve", help="solve a bundle and write a solution file")
    p.add_argument("bundle")
    p.add_argument("-o", "--out", help="solution path (default: <bundle>/solution.json)")
    p.add_argument("--solver", choices=SOLVERS, default="multiphase")
    p.add_argument("--trace", help="write per-iteration JSON lines here")
    _add_run_config(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("evaluate", help="score a solution against the bundle's ground truth")
    p.add_argument("solution")
    p.add_argument("bundle")
    p.add_argument("--json", action="store_true", help="print a machine-readable record")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("render", help="paste pieces at their solved positions")
    p.add_argument("bundle")
    p.add_argument("out")
    p.add_argument("--solution", help="solution file (default: ground truth)")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("bench", help="solve and score every bundle in a corpus directory")
    p.add_argument("corpus")
    p.add_argument("--repeats", type=int, default=10,
                   help="runs for bundles with more than two constant pieces")
    p.add_argument("--solver", choices=SOLVERS, default="multiphase")
    p.add_argument("--out", help="CSV path (default: stdout)")
    p.add_argument("--delimiter", default=",")
    _add_run_config(p)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:       # --help (0) or a usage error (1)
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except BundleError as exc:
        print(f"jigsaw-rl: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"jigsaw-rl: invalid input: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
