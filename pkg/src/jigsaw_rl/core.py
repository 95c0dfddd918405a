"""Problem instances, label spaces and labeling-matrix algebra.

Positions are 0-based ``(row, col)`` pairs throughout the package. Labels are
enumerated position-major, orientation-minor::

    label = (row * cols + col) * n_orient + orientation

so a Type 1 labeling has one column per position and a Type 2 labeling has a
contiguous group of 4 columns (0, 90, 180, 270 degrees clockwise) per
position.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

ROW_TOL = 1e-9


class Relation(enum.IntEnum):
    """Spatial relation of a second piece with respect to a first one.

    Values run clockwise, so rotating a configuration by 90 degrees clockwise
    maps relation ``r`` to ``(r + 1) % 4``.
    """

    RIGHT = 0
    DOWN = 1
    LEFT = 2
    UP = 3

    @property
    def opposite(self) -> "Relation":
        return Relation((self + 2) % 4)

    @property
    def offset(self) -> tuple[int, int]:
        return _OFFSETS[self]


_OFFSETS = {
    Relation.RIGHT: (0, 1),
    Relation.DOWN: (1, 0),
    Relation.LEFT: (0, -1),
    Relation.UP: (-1, 0),
}


class PuzzleType(enum.IntEnum):
    TYPE1 = 1
    TYPE2 = 2


@dataclass(frozen=True)
class GridDims:
    rows: int
    cols: int

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ValueError(f"grid dimensions must be positive, got {self.rows}x{self.cols}")

    @property
    def n_positions(self) -> int:
        return self.rows * self.cols

    def contains(self, pos: tuple[int, int]) -> bool:
        return 0 <= pos[0] < self.rows and 0 <= pos[1] < self.cols

    def index(self, pos: tuple[int, int]) -> int:
        return pos[0] * self.cols + pos[1]

    def position(self, index: int) -> tuple[int, int]:
        return divmod(index, self.cols)


def neighbors(pos: tuple[int, int], dims: GridDims) -> list[tuple[tuple[int, int], Relation]]:
    """In-grid 4-neighbors of ``pos`` with the relation leading to each."""
    out = []
    for rel in Relation:
        dr, dc = rel.offset
        q = (pos[0] + dr, pos[1] + dc)
        if dims.contains(q):
            out.append((q, rel))
    return out


@dataclass(frozen=True)
class Label:
    row: int
    col: int
    orientation: int = 0  # quarter turns clockwise


@dataclass(frozen=True)
class ProblemInstance:
    dims: GridDims
    puzzle_type: PuzzleType = PuzzleType.TYPE1

    @property
    def n(self) -> int:
        return self.dims.n_positions

    @property
    def n_orient(self) -> int:
        return 1 if self.puzzle_type == PuzzleType.TYPE1 else 4

    @property
    def m(self) -> int:
        return self.n * self.n_orient

    def label_index(self, label: Label) -> int:
        if not self.dims.contains((label.row, label.col)):
            raise ValueError(f"label {label} outside {self.dims}")
        if not 0 <= label.orientation < self.n_orient:
            raise ValueError(f"orientation {label.orientation} invalid for {self.puzzle_type.name}")
        return self.dims.index((label.row, label.col)) * self.n_orient + label.orientation

    def label(self, index: int) -> Label:
        pos, theta = divmod(index, self.n_orient)
        r, c = self.dims.position(pos)
        return Label(r, c, theta)

    def label_position(self, index: int) -> int:
        """Position index (row-major) of a label index."""
        return index // self.n_orient

    def neighbor_table(self) -> np.ndarray:
        """``(4, n_positions)`` array of neighbor position indices, ``-1`` off-grid."""
        N, M = self.dims.rows, self.dims.cols
        rr, cc = np.divmod(np.arange(N * M), M)
        out = np.full((4, N * M), -1, dtype=np.int64)
        for rel in Relation:
            dr, dc = rel.offset
            r2, c2 = rr + dr, cc + dc
            ok = (r2 >= 0) & (r2 < N) & (c2 >= 0) & (c2 < M)
            out[rel, ok] = r2[ok] * M + c2[ok]
        return out


@dataclass(frozen=True, eq=False)
class Labeling:
    """Row-stochastic ``n x m`` assignment matrix with anchoring bookkeeping.

    ``anchors`` maps anchored object ids to their label index. ``orientation_lock``
    is the Type 2 ``(piece, orientation)`` pair whose piece may only take that
    orientation until it is anchored.
    """

    instance: ProblemInstance
    values: np.ndarray
    anchors: dict[int, int] = field(default_factory=dict)
    orientation_lock: tuple[int, int] | None = None

    @property
    def anchored_objects(self) -> set[int]:
        return set(self.anchors)

    @property
    def anchored_positions(self) -> set[int]:
        O = self.instance.n_orient
        return {lab // O for lab in self.anchors.values()}

    def free_positions(self) -> list[int]:
        taken = self.anchored_positions
        return [p for p in range(self.instance.n) if p not in taken]

    def free_objects(self) -> list[int]:
        return [i for i in range(self.instance.n) if i not in self.anchors]

    @property
    def complete(self) -> bool:
        return len(self.anchors) == self.instance.n

    def placement(self) -> list[tuple[int, int, int]]:
        """Per-object ``(row, col, orientation)`` read off the row maxima."""
        out = []
        for i in range(self.instance.n):
            lab = self.instance.label(int(np.argmax(self.values[i])))
            out.append((lab.row, lab.col, lab.orientation))
        return out

    def check(self) -> None:
        """Raise ``AssertionError`` when a structural invariant is broken."""
        v = self.values
        assert v.shape == (self.instance.n, self.instance.m)
        assert np.all(v >= 0) and np.all(v <= 1 + ROW_TOL)
        assert np.allclose(v.sum(axis=1), 1.0, rtol=0, atol=ROW_TOL)
        O = self.instance.n_orient
        for i, lab in self.anchors.items():
            assert v[i, lab] == 1.0
            pos = lab // O
            block = v[:, pos * O:(pos + 1) * O]
            assert block.sum() == 1.0 and block[i].sum() == 1.0


def uniform_labeling(instance: ProblemInstance) -> Labeling:
    """Barycenter of the labeling space: every entry ``1/m``."""
    vals = np.full((instance.n, instance.m), 1.0 / instance.m)
    return Labeling(instance, vals)


def _is_binary(v: np.ndarray) -> bool:
    return bool(np.all((v == 0) | (v == 1)))


def is_permutation(lab: Labeling) -> bool:
    v = lab.values
    if v.shape[0] != v.shape[1] or not _is_binary(v):
        return False
    return bool(np.all(v.sum(axis=1) == 1) and np.all(v.sum(axis=0) == 1))


def is_type2_permutation(lab: Labeling) -> bool:
    v = lab.values
    n, m = v.shape
    if m != 4 * n or not _is_binary(v):
        return False
    groups = v.reshape(n, n, 4).sum(axis=(0, 2))
    return bool(np.all(v.sum(axis=1) == 1) and np.all(groups == 1))


def is_feasible(lab: Labeling) -> bool:
    if lab.instance.puzzle_type == PuzzleType.TYPE1:
        return is_permutation(lab)
    return is_type2_permutation(lab)


def block_adjacent_positions(instance: ProblemInstance, anchored_positions: Iterable[int]) -> list[int]:
    """Free positions 4-adjacent to the anchored block, or all positions if none are anchored."""
    taken = set(anchored_positions)
    if not taken:
        return list(range(instance.n))
    nb = instance.neighbor_table()
    out = set()
    for p in taken:
        for q in nb[:, p]:
            if q >= 0 and q not in taken:
                out.add(int(q))
    return sorted(out)


def _reset_free(vals: np.ndarray, instance: ProblemInstance, anchors: dict[int, int],
                lock: tuple[int, int] | None) -> None:
    """Reset unanchored rows to the barycenter of the remaining subspace, in place."""
    O = instance.n_orient
    taken = {lab // O for lab in anchors.values()}
    free_pos = np.array([p for p in range(instance.n) if p not in taken], dtype=np.int64)
    free_obj = [i for i in range(instance.n) if i not in anchors]
    if not free_obj:
        return
    cols = (free_pos[:, None] * O + np.arange(O)[None, :]).ravel()
    F = len(free_pos)
    vals[free_obj, :] = 0.0
    vals[np.ix_(free_obj, cols)] = 1.0 / (O * F)
    if lock is not None and lock[0] not in anchors:
        i1, theta1 = lock
        vals[i1, :] = 0.0
        vals[i1, free_pos * O + theta1] = 1.0 / F


def anchor(lab: Labeling, i: int, label: int | Label, *, check_adjacency: bool = True) -> Labeling:
    """Anchor object ``i`` to ``label`` and reset the rest to the subspace barycenter.

    The object's row becomes binary, every other object loses all mass on the
    label's position (all orientations), and the unanchored entries restart
    from the barycenter of what remains. Anchors after the first must sit next
    to the existing block when ``check_adjacency`` is set.
    """
    inst = lab.instance
    if isinstance(label, Label):
        label = inst.label_index(label)
    O = inst.n_orient
    pos = label // O
    if i in lab.anchors:
        raise ValueError(f"object {i} is already anchored")
    taken = lab.anchored_positions
    if pos in taken:
        raise ValueError(f"position {inst.dims.position(pos)} is already occupied")
    if check_adjacency and taken and pos not in block_adjacent_positions(inst, taken):
        raise ValueError(f"position {inst.dims.position(pos)} is not adjacent to the anchored block")
    if lab.orientation_lock is not None and lab.orientation_lock[0] == i and label % O != lab.orientation_lock[1]:
        raise ValueError(f"object {i} is locked to orientation {lab.orientation_lock[1]}")
    anchors = dict(lab.anchors)
    anchors[i] = label
    vals = lab.values.copy()
    vals[:, pos * O:(pos + 1) * O] = 0.0
    vals[i, :] = 0.0
    vals[i, label] = 1.0
    _reset_free(vals, inst, anchors, lab.orientation_lock)
    return Labeling(inst, vals, anchors, lab.orientation_lock)


def anchored_bbox(lab: Labeling) -> tuple[int, int, int, int] | None:
    """``(row_min, row_max, col_min, col_max)`` of the anchored positions."""
    if not lab.anchors:
        return None
    rc = [lab.instance.dims.position(p) for p in lab.anchored_positions]
    rows = [r for r, _ in rc]
    cols = [c for _, c in rc]
    return min(rows), max(rows), min(cols), max(cols)


def translate_block(lab: Labeling, direction: Relation) -> Labeling:
    """Shift every anchored piece one step in ``direction``, keeping orientations."""
    inst = lab.instance
    dims = inst.dims
    O = inst.n_orient
    dr, dc = Relation(direction).offset
    anchors = {}
    for i, label in lab.anchors.items():
        r, c = dims.position(label // O)
        q = (r + dr, c + dc)
        if not dims.contains(q):
            raise ValueError(f"translation {Relation(direction).name} pushes object {i} off the grid")
        anchors[i] = dims.index(q) * O + label % O
    vals = np.zeros_like(lab.values)
    for i, label in anchors.items():
        vals[i, label] = 1.0
    _reset_free(vals, inst, anchors, lab.orientation_lock)
    return Labeling(inst, vals, anchors, lab.orientation_lock)
