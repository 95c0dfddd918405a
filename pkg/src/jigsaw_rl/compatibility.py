"""From dissimilarities to symmetric piece compatibilities.

Tables are ``(4, K, K)`` arrays indexed ``[relation, u, v]`` where ``u``/``v``
are compatibility nodes (pieces for Type 1, rotated pieces for Type 2, see
:func:`jigsaw_rl.pictorial.node_rasters`). Entries between nodes of the same
piece are excluded from all statistics and are always zero.

The pipeline used by the solvers is::

    raw = compatibility_table(D, k)          # directed, per (u, relation)
    C = symmetrize(raw)
    C = adjust_constant(C, flags, rng)       # only with > 2 constant pieces
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import Relation


def _count_for_percentile(k: float, count: int) -> int:
    if not 0 < k <= 100:
        raise ValueError(f"percentile k must be in (0, 100], got {k}")
    # nearest-rank, guarded against 0.03 * 100 == 3.0000000000000004
    return max(1, min(count, math.ceil(k * count / 100.0 - 1e-9)))


@dataclass
class RankStats:
    """Rank and percentile statistics of one table of directed dissimilarities."""

    ranks: np.ndarray     # (4, K, K) rank of v among candidates of (R, u); -1 when excluded
    sorted_d: np.ndarray  # (4, K, C) candidate dissimilarities, increasing
    valid: np.ndarray     # (K, K) candidate mask

    @classmethod
    def from_dissimilarities(cls, D: np.ndarray) -> "RankStats":
        D = np.asarray(D, dtype=np.float64)
        valid = np.isfinite(D[0])
        n_cand = valid.sum(axis=1)
        if np.any(n_cand != n_cand[0]):
            raise ValueError("every node needs the same number of candidates")
        order = np.argsort(np.where(valid[None], D, np.inf), axis=2, kind="stable")
        ranks = np.empty_like(order)
        np.put_along_axis(ranks, order, np.arange(D.shape[2])[None, None, :], axis=2)
        ranks = np.where(valid[None], ranks, -1)
        C = int(n_cand[0])
        sorted_d = np.take_along_axis(D, order[:, :, :C], axis=2)
        return cls(ranks, sorted_d, valid)

    @property
    def count(self) -> int:
        return self.sorted_d.shape[2]

    def percentile_avg(self, k: float) -> np.ndarray:
        """``(4, K)`` mean of the smallest ``ceil(k% * count)`` dissimilarities."""
        c = _count_for_percentile(k, self.count)
        return self.sorted_d[:, :, :c].mean(axis=2)

    def quartile(self) -> np.ndarray:
        """``(4, K)`` 25th percentile (nearest rank) of the dissimilarities."""
        c = _count_for_percentile(25, self.count)
        return self.sorted_d[:, :, c - 1]


def rank_phi(D_row, j: int) -> int:
    """0-based rank of ``D_row[j]`` among the finite entries; ties go to the lower index."""
    D_row = np.asarray(D_row, dtype=np.float64)
    d = D_row[j]
    others = D_row[np.isfinite(D_row)]
    idx = np.flatnonzero(np.isfinite(D_row))
    return int(np.sum(others < d) + np.sum((others == d) & (idx < j)))


def percentile_avg(values, k: float) -> float:
    """Mean of the smallest ``ceil(k/100 * count)`` values (at least one)."""
    v = np.sort(np.asarray(values, dtype=np.float64))
    return float(v[:_count_for_percentile(k, len(v))].mean())


def compat_new(d, p_avg, phi):
    """The percentile-normalized, rank-powered compatibility (vectorized).

    1 when ``d == p_avg == 0``; ``(1 - d/p_avg) ** phi`` when
    ``d <= p_avg`` and ``p_avg > 0`` (with ``0 ** 0 == 1``); 0 otherwise.
    """
    d = np.asarray(d, dtype=np.float64)
    p_avg = np.asarray(p_avg, dtype=np.float64)
    phi = np.asarray(phi, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        base = np.where(p_avg > 0, 1.0 - d / np.where(p_avg > 0, p_avg, 1.0), 0.0)
        powered = np.power(np.clip(base, 0.0, 1.0), phi)
    out = np.where(p_avg > 0,
                   np.where(d <= p_avg, powered, 0.0),
                   np.where(d == 0, 1.0, 0.0))
    return out[()] if out.ndim == 0 else out


def compat_andalo(d, quartile, phi):
    """``exp(-phi - d / quartile)``; with a zero quartile, ``exp(-phi)`` if ``d == 0`` else 0."""
    d = np.asarray(d, dtype=np.float64)
    quartile = np.asarray(quartile, dtype=np.float64)
    phi = np.asarray(phi, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = d / np.where(quartile > 0, quartile, 1.0)
    out = np.where(quartile > 0, np.exp(-phi - ratio),
                   np.where(d == 0, np.exp(-phi), 0.0))
    return out[()] if out.ndim == 0 else out


MEASURES = ("new", "andalo")


def compatibility_table(D: np.ndarray, k: float = 3.0, measure: str = "new") -> np.ndarray:
    """Directed compatibilities ``(4, K, K)`` from directed dissimilarities."""
    stats = RankStats.from_dissimilarities(D)
    phi = np.where(stats.ranks >= 0, stats.ranks, 0).astype(np.float64)
    Dz = np.where(stats.valid[None], D, 0.0)
    if measure == "new":
        C = compat_new(Dz, stats.percentile_avg(k)[:, :, None], phi)
    elif measure == "andalo":
        C = compat_andalo(Dz, stats.quartile()[:, :, None], phi)
    else:
        raise ValueError(f"unknown measure {measure!r}; expected one of {MEASURES}")
    return np.where(stats.valid[None], C, 0.0)


def symmetrize(C: np.ndarray) -> np.ndarray:
    """Average each entry with its mirror: ``C[R, u, v]`` and ``C[opposite(R), v, u]``."""
    C = np.asarray(C, dtype=np.float64)
    out = np.empty_like(C)
    for rel in Relation:
        out[rel] = 0.5 * (C[rel] + C[rel.opposite].T)
    return out


def is_symmetric(C: np.ndarray) -> bool:
    return all(np.array_equal(C[rel], C[rel.opposite].T) for rel in Relation)


def constant_nodes(constant_flags: np.ndarray, n_orient: int) -> np.ndarray:
    return np.repeat(np.asarray(constant_flags, dtype=bool), n_orient)


def adjust_constant(C: np.ndarray, constant_flags, rng: np.random.Generator | int | None,
                    n_orient: int = 1) -> np.ndarray:
    """Redraw maximal compatibilities routed through constant pieces.

    Applies only when more than two pieces are constant. An entry
    ``(R, u, v)`` is affected when some constant node ``w`` has
    ``C[R, u, w] == 1`` and ``C[R, w, v] == 1``; it is replaced by
    ``max(0, X)`` with ``X ~ U(-4, 1)``. One draw is made per mirrored pair
    (right/down entries, in ``(R, u, v)`` order) so the result stays symmetric.
    """
    flags = np.asarray(constant_flags, dtype=bool)
    if flags.sum() <= 2:
        return C.copy()
    rng = np.random.default_rng(rng)
    w = np.flatnonzero(constant_nodes(flags, n_orient))
    out = C.copy()
    maximal = (C == 1.0).astype(np.int64)
    owner = np.arange(C.shape[1]) // n_orient
    other_piece = owner[:, None] != owner[None, :]
    for rel in (Relation.RIGHT, Relation.DOWN):
        A = maximal[rel]
        hit = (A[:, w] @ A[w, :]) > 0
        B = maximal[rel.opposite]
        hit |= ((B[:, w] @ B[w, :]) > 0).T
        hit &= other_piece
        u, v = np.nonzero(hit)
        draws = np.maximum(0.0, rng.uniform(-4.0, 1.0, size=len(u)))
        out[rel, u, v] = draws
        out[rel.opposite, v, u] = draws
    return symmetrize(out)


def save_table(path: str | Path, C: np.ndarray) -> None:
    """Dump a table as ``.npy`` with axes ``(u, v, relation)``, i.e. u-major, then v, then relation."""
    np.save(path, np.ascontiguousarray(np.moveaxis(C, 0, -1)))


def load_table(path: str | Path) -> np.ndarray:
    return np.moveaxis(np.load(path), -1, 0)
