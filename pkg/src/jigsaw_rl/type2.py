"""Unknown-orientation (Type 2) solver."""
from __future__ import annotations

from typing import IO

import numpy as np

from .core import GridDims, Labeling, ProblemInstance, PuzzleType
from .engine import CoefficientView
from .pictorial import PieceSet
from .solver import Solution, SolverConfig, _trivial, build_table, solve_from_labeling


def select_anchor_piece(table: np.ndarray, n_pieces: int) -> int:
    """Piece with the largest sum over sides of its best achievable compatibility."""
    per_node = table.max(axis=2)                          # (4, 4n)
    per_piece = per_node.reshape(4, n_pieces, 4).max(axis=2)
    return int(np.argmax(per_piece.sum(axis=0)))


def init_labeling_type2(instance: ProblemInstance, piece: int, theta: int) -> Labeling:
    """Barycenter with ``piece`` restricted to orientation ``theta``."""
    n, m = instance.n, instance.m
    vals = np.full((n, m), 1.0 / m)
    vals[piece] = 0.0
    vals[piece, theta::4] = 1.0 / n
    return Labeling(instance, vals, {}, (piece, theta))


def solve_type2(pieces: PieceSet, dims: GridDims, config: SolverConfig = SolverConfig(),
                table: np.ndarray | None = None, trace: IO[str] | None = None) -> Solution:
    """Solve an unknown-orientation puzzle.

    Square grids get one run with a seeded bias orientation; rectangular grids
    get a second run with the bias turned by 90 degrees, and the run with the
    larger final ALC is returned.
    """
    if pieces.n != dims.n_positions:
        raise ValueError(f"{pieces.n} pieces do not fill a {dims.rows}x{dims.cols} grid")
    if pieces.n == 1:
        return _trivial(dims, PuzzleType.TYPE2)
    rng = np.random.default_rng(config.seed)
    if table is None:
        table = build_table(pieces, PuzzleType.TYPE2, config, rng)
    theta1 = int(rng.integers(4))
    inst = ProblemInstance(dims, PuzzleType.TYPE2)
    coeffs = CoefficientView(inst, table)
    i1 = select_anchor_piece(table, pieces.n)
    thetas = [theta1] if dims.rows == dims.cols else [theta1, (theta1 + 1) % 4]
    best = None
    run_alcs = []
    for run, theta in enumerate(thetas):
        sol = solve_from_labeling(init_labeling_type2(inst, i1, theta), coeffs, config.phase(), trace,
                                  config.branch_workers)
        sol.diagnostics.update(run=run, anchor_piece=i1, bias_orientation=theta)
        run_alcs.append(sol.alc)
        if best is None or sol.alc > best.alc:
            best = sol
    best.diagnostics["run_alcs"] = run_alcs
    best.diagnostics["constant_pieces"] = int(np.sum(pieces.constant_flags))
    return best
