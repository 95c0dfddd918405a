"""Reconstruction quality: direct comparison, neighbor comparison, perfect reconstruction.

Placements are per-piece ``(row, col, orientation)`` triples (0-based, quarter
turns clockwise) over a grid of the given dimensions.
"""
from __future__ import annotations

from dataclasses import dataclass

from .core import GridDims, PuzzleType

Placement = list[tuple[int, int, int]]


@dataclass(frozen=True)
class Scores:
    dc: float
    nc: float
    pr: bool
    rotation: int = 0  # quarter turns applied to the solution before scoring


def _check(sol: Placement, gt: Placement, dims: GridDims) -> None:
    if len(sol) != len(gt) or len(gt) != dims.n_positions:
        raise ValueError(f"placement sizes {len(sol)}/{len(gt)} do not match a {dims.rows}x{dims.cols} grid")
    for r, c, _ in sol:
        if not dims.contains((r, c)):
            raise ValueError(f"position {(r, c)} outside a {dims.rows}x{dims.cols} grid")


def direct_comparison(sol: Placement, gt: Placement, dims: GridDims,
                      with_orientation: bool = False) -> float:
    """Fraction of pieces at their ground-truth position (and orientation if requested)."""
    _check(sol, gt, dims)
    width = 3 if with_orientation else 2
    hits = sum(tuple(s[:width]) == tuple(g[:width]) for s, g in zip(sol, gt))
    return hits / len(gt)


def neighbor_comparison(sol: Placement, gt: Placement, dims: GridDims,
                        with_orientation: bool = False) -> float:
    """Fraction of the grid's right/down adjacencies in ``sol`` that also occur in ``gt``.

    With orientations, a matching pair must also keep the relative
    orientation it has in the ground truth.
    """
    _check(sol, gt, dims)
    total = dims.rows * (dims.cols - 1) + (dims.rows - 1) * dims.cols
    if total == 0:
        return 1.0
    at = {(r, c): i for i, (r, c, _) in enumerate(sol)}
    gt_at = {(r, c): i for i, (r, c, _) in enumerate(gt)}
    hits = 0
    for (r, c), a in at.items():
        for dr, dc in ((0, 1), (1, 0)):
            b = at.get((r + dr, c + dc))
            if b is None:
                continue
            gr, gc, _ = gt[a]
            if gt_at.get((gr + dr, gc + dc)) != b:
                continue
            if with_orientation and (sol[b][2] - sol[a][2]) % 4 != (gt[b][2] - gt[a][2]) % 4:
                continue
            hits += 1
    return hits / total


def perfect_reconstruction(sol: Placement, gt: Placement, dims: GridDims,
                           with_orientation: bool = False) -> bool:
    return direct_comparison(sol, gt, dims, with_orientation) == 1.0


def rotate_placement(placement: Placement, dims: GridDims, quarter_turns: int) -> tuple[Placement, GridDims]:
    """Rotate a whole assembly clockwise, returning the new placement and grid."""
    out, d = list(placement), dims
    for _ in range(quarter_turns % 4):
        out = [(c, d.rows - 1 - r, (t + 1) % 4) for r, c, t in out]
        d = GridDims(d.cols, d.rows)
    return out, d


def scores(sol: Placement, gt: Placement, dims: GridDims, with_orientation: bool = False) -> Scores:
    return Scores(direct_comparison(sol, gt, dims, with_orientation),
                  neighbor_comparison(sol, gt, dims, with_orientation),
                  perfect_reconstruction(sol, gt, dims, with_orientation))


def best_rotation_scores(sol: Placement, gt: Placement, dims: GridDims) -> Scores:
    """Scores under the global rotation of ``sol`` that maximizes DC.

    Square grids try all four rotations, rectangular grids only 0 and 180
    degrees. Ties keep the smallest rotation.
    """
    turns = (0, 1, 2, 3) if dims.rows == dims.cols else (0, 2)
    best = None
    for k in turns:
        rotated, d = rotate_placement(sol, dims, k)
        s = scores(rotated, gt, d, with_orientation=True)
        if best is None or s.dc > best.dc:
            best = Scores(s.dc, s.nc, s.pr, k)
    return best


def evaluate(sol: Placement, gt: Placement, dims: GridDims, puzzle_type: PuzzleType) -> Scores:
    if puzzle_type == PuzzleType.TYPE2:
        return best_rotation_scores(sol, gt, dims)
    return scores(sol, gt, dims)
