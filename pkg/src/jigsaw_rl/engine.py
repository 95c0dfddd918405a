"""Nonlinear relaxation-labeling dynamics over a puzzle label space."""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from typing import IO

import numpy as np

from .core import Labeling, ProblemInstance, PuzzleType, Relation


class CoefficientView:
    """Compatibility coefficients ``r_ij(lambda, mu)`` backed by a node table.

    ``r_ij(lambda, mu) = C[R, node(i, theta_lambda), node(j, theta_mu)]`` when
    ``i != j`` and the position of ``mu`` lies in relation ``R`` to the
    position of ``lambda``, and 0 otherwise. The ``n^2 m^2`` array is never
    built.
    """

    def __init__(self, instance: ProblemInstance, table: np.ndarray):
        K = instance.n * instance.n_orient
        table = np.array(table, dtype=np.float64)
        if table.shape != (4, K, K):
            raise ValueError(f"table shape {table.shape} does not match {K} nodes")
        owner = np.arange(K) // instance.n_orient
        table[:, owner[:, None] == owner[None, :]] = 0.0   # r_ii is zero by definition
        self.instance = instance
        self.table = table
        self.nbr = instance.neighbor_table()

    def r(self, i: int, lam: int, j: int, mu: int) -> float:
        inst = self.instance
        if i == j:
            return 0.0
        O = inst.n_orient
        p, q = lam // O, mu // O
        for rel in Relation:
            if self.nbr[rel, p] == q:
                return float(self.table[rel, i * O + lam % O, j * O + mu % O])
        return 0.0

    def node_major(self, values: np.ndarray) -> np.ndarray:
        """Reshape an ``(n, m)`` labeling into ``(n * O, n_positions)`` node rows."""
        inst = self.instance
        O = inst.n_orient
        return values.reshape(inst.n, inst.n, O).transpose(0, 2, 1).reshape(inst.n * O, inst.n)

    def label_major(self, nodes: np.ndarray, n_rows: int) -> np.ndarray:
        O = self.instance.n_orient
        return nodes.reshape(n_rows, O, -1).transpose(0, 2, 1).reshape(n_rows, -1)

    def shifted(self, X: np.ndarray, rel: Relation, cols: np.ndarray | None = None) -> np.ndarray:
        """``X`` gathered at the ``rel``-neighbor of each position (zero off-grid)."""
        nb = self.nbr[rel] if cols is None else self.nbr[rel, cols]
        out = np.zeros((X.shape[0], len(nb)))
        ok = nb >= 0
        out[:, ok] = X[:, nb[ok]]
        return out


def support(lab: Labeling, coeffs: CoefficientView) -> np.ndarray:
    """``q_i(lambda) = sum_j sum_mu r_ij(lambda, mu) p_j(mu)`` over neighboring positions only."""
    X = coeffs.node_major(lab.values)
    Q = np.zeros_like(X)
    for rel in Relation:
        Q += coeffs.table[rel] @ coeffs.shifted(X, rel)
    return coeffs.label_major(Q, lab.instance.n)


def update(values: np.ndarray, q: np.ndarray) -> np.ndarray:
    """One multiplicative update, row by row; rows with zero denominator are left unchanged."""
    pq = values * q
    den = pq.sum(axis=1, keepdims=True)
    ok = den[:, 0] > 0
    out = values.copy()
    out[ok] = pq[ok] / den[ok]
    out[ok] /= out[ok].sum(axis=1, keepdims=True)
    return out


def alc(values: np.ndarray, q: np.ndarray) -> float:
    """Average local consistency ``sum_i sum_lambda p_i(lambda) q_i(lambda)``."""
    return float(np.sum(values * q))


class StopReason(str, enum.Enum):
    THRESHOLD = "threshold"
    CONVERGED = "converged"
    MAX_ITER = "max_iter"


@dataclass(frozen=True)
class PhaseConfig:
    epsilon: float = 1e-4
    alpha: float = 0.7
    max_iter: int = 1000

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if not 0.5 < self.alpha <= 1:
            raise ValueError("alpha must lie in (0.5, 1]")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")


@dataclass(frozen=True)
class Candidate:
    obj: int
    label: int
    p: float
    q: float

    def sort_key(self):
        return (-self.p, -self.q, self.obj, self.label)


@dataclass
class PhaseOutcome:
    labeling: Labeling
    iterations: int
    alc: float
    candidates: list[Candidate]
    reason: StopReason
    alc_trace: list[float] = field(default_factory=list)


class _ActiveBlock:
    """Support restricted to unanchored objects and free labels.

    Anchored rows are fixed points of the update and every unanchored row is
    zero on occupied positions, so only this block evolves during a phase.
    """

    def __init__(self, lab: Labeling, coeffs: CoefficientView):
        inst = lab.instance
        O = inst.n_orient
        self.coeffs = coeffs
        self.O = O
        self.rows = np.array(lab.free_objects(), dtype=np.int64)
        self.pos = np.array(lab.free_positions(), dtype=np.int64)
        self.cols = (self.pos[:, None] * O + np.arange(O)[None, :]).ravel()
        self.row_nodes = (self.rows[:, None] * O + np.arange(O)[None, :]).ravel()
        self.tables = [coeffs.table[rel][self.row_nodes] for rel in Relation]
        self.inner = [t[:, self.row_nodes] for t in self.tables]
        # Anchored pieces: their node, position and contribution to the active block.
        anchored = [(i, l) for i, l in lab.anchors.items()]
        self.a_nodes = np.array([i * O + l % O for i, l in anchored], dtype=np.int64)
        self.a_pos = np.array([l // O for _, l in anchored], dtype=np.int64)
        X = coeffs.node_major(lab.values).copy()
        X[self.row_nodes] = 0.0
        self.fixed_q = np.zeros((len(self.row_nodes), len(self.pos)))
        for rel in Relation:
            self.fixed_q += self.tables[rel] @ coeffs.shifted(X, rel, self.pos)
        # Inverse position lookup for shifting inside the free block.
        self.pos_slot = np.full(inst.n, -1, dtype=np.int64)
        self.pos_slot[self.pos] = np.arange(len(self.pos))
        self.shift_idx = []
        for rel in Relation:
            nb = coeffs.nbr[rel, self.pos]
            self.shift_idx.append(np.where(nb >= 0, self.pos_slot[np.maximum(nb, 0)], -1))
        self.a_terms = []
        for rel in Relation:
            if len(self.a_nodes) == 0:
                break
            nb = coeffs.nbr[rel, self.a_pos]
            slot = np.where(nb >= 0, self.pos_slot[np.maximum(nb, 0)], -1)
            ok = slot >= 0
            if ok.any():
                self.a_terms.append((coeffs.table[rel][np.ix_(self.a_nodes[ok], self.row_nodes)], slot[ok]))

    def support(self, P: np.ndarray) -> np.ndarray:
        """Support on the active block for active values ``P`` (rows x free labels)."""
        nr = len(self.rows)
        X = P.reshape(nr, len(self.pos), self.O).transpose(0, 2, 1).reshape(nr * self.O, len(self.pos))
        Q = self.fixed_q.copy()
        for rel in Relation:
            idx = self.shift_idx[rel]
            ok = idx >= 0
            if not ok.any():
                continue
            Xs = np.zeros_like(X)
            Xs[:, ok] = X[:, idx[ok]]
            Q += self.inner[rel] @ Xs
        return Q.reshape(nr, self.O, len(self.pos)).transpose(0, 2, 1).reshape(nr, -1)

    def anchored_alc(self, P: np.ndarray) -> float:
        """Sum of the anchored rows' support at their own labels, from the active block."""
        if not self.a_terms:
            return 0.0
        nr = len(self.rows)
        X = P.reshape(nr, len(self.pos), self.O).transpose(0, 2, 1).reshape(nr * self.O, len(self.pos))
        return float(sum(np.sum(rows * X[:, slots].T) for rows, slots in self.a_terms))

    def fixed_alc(self, lab: Labeling) -> float:
        """ALC contribution between anchored pieces, constant during a phase."""
        total = 0.0
        table = self.coeffs.table
        where = dict(zip(self.a_pos.tolist(), self.a_nodes.tolist()))
        for p, u in where.items():
            for rel in Relation:
                q = self.coeffs.nbr[rel, p]
                if q >= 0 and q in where:
                    total += table[rel, u, where[q]]
        return float(total)


def _candidates(lab: Labeling, P: np.ndarray, Q: np.ndarray, block: _ActiveBlock,
                allowed_mask: np.ndarray, threshold: float | None) -> list[Candidate]:
    mask = allowed_mask & (P > 0)
    if threshold is not None:
        mask &= P >= threshold
    else:
        if not mask.any():
            mask = allowed_mask.copy()
        if not mask.any():
            return []
        best = P[mask].max()
        mask &= P == best
    r, c = np.nonzero(mask)
    out = [Candidate(int(block.rows[a]), int(block.cols[b]), float(P[a, b]), float(Q[a, b]))
           for a, b in zip(r, c)]
    out.sort(key=Candidate.sort_key)
    return out


def _allowed_mask(lab: Labeling, block: _ActiveBlock, allowed_positions) -> np.ndarray:
    O = block.O
    allowed = np.zeros(lab.instance.n, dtype=bool)
    allowed[list(allowed_positions)] = True
    mask = np.repeat(allowed[block.pos], O)[None, :].repeat(len(block.rows), axis=0)
    lock = lab.orientation_lock
    if lock is not None and lock[0] not in lab.anchors:
        r = int(np.flatnonzero(block.rows == lock[0])[0])
        theta = np.tile(np.arange(O), len(block.pos))
        mask[r] &= theta == lock[1]
    return mask


def run_phase(lab: Labeling, coeffs: CoefficientView, cfg: PhaseConfig,
              allowed_positions, trace: IO[str] | None = None) -> PhaseOutcome:
    """Iterate support/update until an allowed entry reaches ``alpha`` or the ALC stalls.

    ``allowed_positions`` restricts where the next anchor may go; entries at
    other positions keep evolving but never stop the phase.
    """
    block = _ActiveBlock(lab, coeffs)
    P = lab.values[np.ix_(block.rows, block.cols)].copy()
    allowed = _allowed_mask(lab, block, allowed_positions)
    base = block.fixed_alc(lab)

    def total_alc(P, Q):
        return float(np.sum(P * Q)) + block.anchored_alc(P) + base

    Q = block.support(P)
    A = total_alc(P, Q)
    history = [A]
    reason = StopReason.MAX_ITER
    it = 0
    threshold_hit = False
    for it in range(1, cfg.max_iter + 1):
        P = update(P, Q)
        Q = block.support(P)
        A_new = total_alc(P, Q)
        history.append(A_new)
        if trace is not None:
            trace.write(json.dumps({"iteration": it, "alc": A_new, "max_p": float(P.max(initial=0.0)),
                                    "anchored": len(lab.anchors)}) + "\n")
        if np.any(allowed & (P >= cfg.alpha)):
            reason = StopReason.THRESHOLD
            threshold_hit = True
            break
        if A_new - A < cfg.epsilon:
            reason = StopReason.CONVERGED
            A = A_new
            break
        A = A_new
    values = lab.values.copy()
    values[np.ix_(block.rows, block.cols)] = P
    out = Labeling(lab.instance, values, dict(lab.anchors), lab.orientation_lock)
    if threshold_hit:
        cands = _candidates(lab, P, Q, block, allowed, cfg.alpha)
    else:
        cands = _candidates(lab, P, Q, block, allowed, cfg.alpha) or _candidates(lab, P, Q, block, allowed, None)
    return PhaseOutcome(out, it, history[-1], cands, reason, history)


def full_alc(lab: Labeling, coeffs: CoefficientView) -> float:
    return alc(lab.values, support(lab, coeffs))


def sinkhorn_balance(values: np.ndarray, iterations: int = 1000, tol: float = 1e-9) -> np.ndarray:
    """Alternate column and row normalization toward a doubly stochastic matrix.

    Zero rows/columns are left at zero. Stops once every row and column sum is
    within ``tol`` of 1, or after ``iterations`` sweeps.
    """
    A = np.array(values, dtype=np.float64)
    for _ in range(iterations):
        cs = A.sum(axis=0)
        A = A / np.where(cs > 0, cs, 1.0)[None, :]
        rs = A.sum(axis=1)
        A = A / np.where(rs > 0, rs, 1.0)[:, None]
        cs = A.sum(axis=0)
        if np.all(np.abs(cs[cs > 0] - 1) <= tol):
            break
    return A
