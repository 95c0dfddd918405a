"""Multi-phase relaxation-labeling solvers.

Each phase runs the plain dynamics from the current labeling and ends by
anchoring one piece to one free position next to the already anchored block.
After every anchoring the block is pushed off a grid edge it abuts, unless it
is exactly one line short of spanning that axis; then the computation forks
into "leave it" and "shift it" branches and the branch with the largest final
ALC wins.
"""
from __future__ import annotations

import itertools
import logging
from concurrent.futures import FIRST_COMPLETED, ThreadPoolExecutor, wait
from dataclasses import dataclass, field, replace
from typing import IO

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import compatibility
from .core import (GridDims, Labeling, ProblemInstance, PuzzleType, Relation, anchor,
                   anchored_bbox, block_adjacent_positions, is_feasible, translate_block,
                   uniform_labeling)
from .engine import (CoefficientView, PhaseConfig, PhaseOutcome, StopReason, alc, full_alc,
                     run_phase, sinkhorn_balance, support, update)
from .pictorial import PieceSet, dissimilarity_table

log = logging.getLogger(__name__)

DEFAULT_K = {PuzzleType.TYPE1: 3.0, PuzzleType.TYPE2: 1.5}


@dataclass(frozen=True)
class SolverConfig:
    epsilon: float = 1e-4
    alpha: float = 0.7
    k: float | None = None          # percentile; None picks the per-type default
    measure: str = "new"
    seed: int = 0
    max_iter: int = 1000
    branch_workers: int = 1         # threads for independent branches; results do not depend on it

    def phase(self) -> PhaseConfig:
        return PhaseConfig(self.epsilon, self.alpha, self.max_iter)

    def k_for(self, puzzle_type: PuzzleType) -> float:
        return DEFAULT_K[puzzle_type] if self.k is None else self.k


@dataclass(frozen=True)
class AnchorEvent:
    obj: int
    label: int
    p: float
    phase: int
    reason: str


@dataclass
class BranchState:
    labeling: Labeling
    flagged: tuple[bool, bool] = (False, False)  # (vertical, horizontal) axis awaiting no more shifts
    lineage: str = ""
    events: list[AnchorEvent] = field(default_factory=list)
    translations: int = 0
    iterations: int = 0


@dataclass
class Solution:
    placement: list[tuple[int, int, int]]
    alc: float
    dims: GridDims
    puzzle_type: PuzzleType
    labeling: Labeling | None = None
    diagnostics: dict = field(default_factory=dict)


def select_anchor_candidate(outcome: PhaseOutcome) -> tuple[int, int]:
    """Pick by highest p, then highest q, then lowest object, then lowest label."""
    if not outcome.candidates:
        raise ValueError("phase produced no anchoring candidate")
    best = min(outcome.candidates, key=lambda c: c.sort_key())
    return best.obj, best.label


def maybe_translate(state: BranchState) -> tuple[BranchState, list[Relation]]:
    """Push the anchored block off grid edges; report axes that need branching.

    Returns the (possibly translated) state and, for every axis that has just
    become one line short of the grid, the direction a shifted branch would
    move the block.
    """
    lab = state.labeling
    box = anchored_bbox(lab)
    if box is None:
        return state, []
    dims = lab.instance.dims
    rmin, rmax, cmin, cmax = box
    pending = []
    flagged = list(state.flagged)
    axes = [(rmin, rmax, dims.rows, Relation.DOWN, Relation.UP),
            (cmin, cmax, dims.cols, Relation.RIGHT, Relation.LEFT)]
    for axis, (lo, hi, size, inward_from_low, inward_from_high) in enumerate(axes):
        extent = hi - lo + 1
        if flagged[axis] or extent == size:
            continue
        if extent == size - 1:
            flagged[axis] = True
            pending.append(inward_from_low if lo == 0 else inward_from_high)
        elif lo == 0:
            lab = translate_block(lab, inward_from_low)
            state = replace(state, translations=state.translations + 1)
        elif hi == size - 1:
            lab = translate_block(lab, inward_from_high)
            state = replace(state, translations=state.translations + 1)
    return replace(state, labeling=lab, flagged=tuple(flagged)), pending


def _fork(state: BranchState, pending: list[Relation]) -> list[BranchState]:
    out = []
    for choice in itertools.product((False, True), repeat=len(pending)):
        lab = state.labeling
        tag = ""
        for shift, direction in zip(choice, pending):
            if shift:
                lab = translate_block(lab, direction)
            tag += direction.name[0] if shift else "-"
        out.append(replace(state, labeling=lab, lineage=state.lineage + tag,
                           events=list(state.events),
                           translations=state.translations + sum(choice)))
    return out


def _run_phase_and_anchor(state: BranchState, coeffs: CoefficientView, cfg: PhaseConfig,
                          trace: IO[str] | None) -> BranchState:
    lab = state.labeling
    allowed = block_adjacent_positions(lab.instance, lab.anchored_positions)
    outcome = run_phase(lab, coeffs, cfg, allowed, trace)
    i, label = select_anchor_candidate(outcome)
    p = float(outcome.labeling.values[i, label])
    new = anchor(outcome.labeling, i, label)
    event = AnchorEvent(i, label, p, len(state.events), outcome.reason.value)
    return replace(state, labeling=new, events=state.events + [event],
                   iterations=state.iterations + outcome.iterations)


def _advance(st: BranchState, coeffs: CoefficientView, cfg: PhaseConfig,
             trace: IO[str] | None) -> tuple[BranchState, list[BranchState]]:
    """Run phases until the branch completes or forks; returns (state, forks)."""
    while not st.labeling.complete:
        st = _run_phase_and_anchor(st, coeffs, cfg, trace)
        st, pending = maybe_translate(st)
        if pending:
            return st, _fork(st, pending)
    return st, []


def branch_and_finish(state: BranchState, coeffs: CoefficientView, cfg: PhaseConfig,
                      trace: IO[str] | None = None, workers: int = 1) -> list[tuple[BranchState, float]]:
    """Run phases to completion, forking on every newly flagged axis.

    Returns every completed branch with its final ALC, in lineage order. With
    ``workers > 1`` branches advance concurrently on a thread pool; no task
    ever waits on another, and the result is identical to a serial run.
    """
    done = []
    if workers <= 1:
        stack = [state]
        while stack:
            st, forks = _advance(stack.pop(), coeffs, cfg, trace)
            if forks:
                stack.extend(reversed(forks))
            else:
                done.append((st, full_alc(st.labeling, coeffs)))
    else:
        with ThreadPoolExecutor(workers) as pool:
            running = {pool.submit(_advance, state, coeffs, cfg, trace)}
            while running:
                finished, running = wait(running, return_when=FIRST_COMPLETED)
                for fut in finished:
                    st, forks = fut.result()
                    if forks:
                        running |= {pool.submit(_advance, f, coeffs, cfg, trace) for f in forks}
                    else:
                        done.append((st, full_alc(st.labeling, coeffs)))
    done.sort(key=lambda t: t[0].lineage)
    return done


def _diagnostics(best: BranchState, branches) -> dict:
    reasons = {}
    for ev in best.events:
        reasons[ev.reason] = reasons.get(ev.reason, 0) + 1
    return {
        "phases": len(best.events),
        "iterations": best.iterations,
        "translations": best.translations,
        "branch": best.lineage,
        "branch_alcs": {st.lineage: a for st, a in branches},
        "stop_reasons": reasons,
    }


def solve_from_labeling(init: Labeling, coeffs: CoefficientView, cfg: PhaseConfig,
                        trace: IO[str] | None = None, workers: int = 1) -> Solution:
    branches = branch_and_finish(BranchState(init), coeffs, cfg, trace, workers)
    best, best_alc = branches[0]
    for st, a in branches[1:]:
        if a > best_alc:
            best, best_alc = st, a
    lab = best.labeling
    assert is_feasible(lab), "multi-phase run ended in an infeasible labeling"
    inst = lab.instance
    return Solution(lab.placement(), best_alc, inst.dims, inst.puzzle_type, lab,
                    _diagnostics(best, branches))


def build_table(pieces: PieceSet, puzzle_type: PuzzleType, config: SolverConfig,
                rng: np.random.Generator) -> np.ndarray:
    """Symmetric compatibility table, constant-piece adjusted, for ``pieces``."""
    D = dissimilarity_table(pieces, puzzle_type)
    raw = compatibility.compatibility_table(D, config.k_for(puzzle_type), config.measure)
    C = compatibility.symmetrize(raw)
    n_orient = 1 if puzzle_type == PuzzleType.TYPE1 else 4
    return compatibility.adjust_constant(C, pieces.constant_flags, rng, n_orient)


def _trivial(dims: GridDims, puzzle_type: PuzzleType) -> Solution:
    inst = ProblemInstance(dims, puzzle_type)
    lab = anchor(uniform_labeling(inst), 0, 0)
    return Solution([(0, 0, 0)], 0.0, dims, puzzle_type, lab, {"phases": 1})


def solve_type1(pieces: PieceSet, dims: GridDims, config: SolverConfig = SolverConfig(),
                table: np.ndarray | None = None, trace: IO[str] | None = None) -> Solution:
    """Solve a known-orientation puzzle; always returns a feasible placement."""
    if pieces.n != dims.n_positions:
        raise ValueError(f"{pieces.n} pieces do not fill a {dims.rows}x{dims.cols} grid")
    if pieces.n == 1:
        return _trivial(dims, PuzzleType.TYPE1)
    rng = np.random.default_rng(config.seed)
    if table is None:
        table = build_table(pieces, PuzzleType.TYPE1, config, rng)
    inst = ProblemInstance(dims, PuzzleType.TYPE1)
    coeffs = CoefficientView(inst, table)
    sol = solve_from_labeling(uniform_labeling(inst), coeffs, config.phase(), trace,
                              config.branch_workers)
    sol.diagnostics["constant_pieces"] = int(np.sum(pieces.constant_flags))
    return sol


def solve_balanced(pieces: PieceSet, dims: GridDims, config: SolverConfig = SolverConfig(),
                   table: np.ndarray | None = None, sinkhorn_iters: int = 100) -> Solution:
    """Single-run baseline: update rule followed by Sinkhorn balancing each iteration.

    The final doubly stochastic labeling is rounded to the permutation with
    maximal total probability, so the output is always feasible even though
    the dynamics alone do not guarantee it.
    """
    if pieces.n == 1:
        return _trivial(dims, PuzzleType.TYPE1)
    rng = np.random.default_rng(config.seed)
    if table is None:
        table = build_table(pieces, PuzzleType.TYPE1, config, rng)
    inst = ProblemInstance(dims, PuzzleType.TYPE1)
    coeffs = CoefficientView(inst, table)
    lab = uniform_labeling(inst)
    P = lab.values
    q = support(lab, coeffs)
    A = alc(P, q)
    it = 0
    for it in range(1, config.max_iter + 1):
        P = sinkhorn_balance(update(P, q), sinkhorn_iters)
        q = support(Labeling(inst, P), coeffs)
        A_new = alc(P, q)
        if abs(A_new - A) < config.epsilon:
            break
        A = A_new
    rows, cols = linear_sum_assignment(-P)
    binary = np.zeros_like(P)
    binary[rows, cols] = 1.0
    anchors = {int(i): int(c) for i, c in zip(rows, cols)}
    final = Labeling(inst, binary, anchors)
    return Solution(final.placement(), full_alc(final, coeffs), dims, PuzzleType.TYPE1, final,
                    {"iterations": it, "balanced": True})
