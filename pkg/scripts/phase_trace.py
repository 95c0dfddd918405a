"""Print the labeling before and after the first anchoring on an engineered 3x3 puzzle.

Every piece's true neighbor has compatibility 1 and everything else 0; the
center piece gathers support from four sides and is the first to cross alpha.
"""
from __future__ import annotations

import numpy as np

from jigsaw_rl.core import GridDims, ProblemInstance, PuzzleType, anchor, uniform_labeling
from jigsaw_rl.engine import CoefficientView, PhaseConfig, run_phase
from jigsaw_rl.solver import select_anchor_candidate


def true_neighbor_table(dims: GridDims) -> np.ndarray:
    n = dims.n_positions
    C = np.zeros((4, n, n))
    nb = ProblemInstance(dims).neighbor_table()
    for rel in range(4):
        for k in range(n):
            if nb[rel, k] >= 0:
                C[rel, k, nb[rel, k]] = 1.0
    return C


def main() -> None:
    dims = GridDims(3, 3)
    inst = ProblemInstance(dims, PuzzleType.TYPE1)
    cv = CoefficientView(inst, true_neighbor_table(dims))
    out = run_phase(uniform_labeling(inst), cv, PhaseConfig(alpha=0.7), range(inst.n))
    i, lam = select_anchor_candidate(out)
    label = inst.label(lam)
    np.set_printoptions(precision=3, suppress=True, linewidth=120)
    print(f"phase 1 stopped ({out.reason.value}) after {out.iterations} iterations")
    print(f"ALC per iteration: {np.round(out.alc_trace, 4).tolist()}")
    print(out.labeling.values)
    print(f"\nanchor piece {i} at ({label.row}, {label.col}) with p = {out.labeling.values[i, lam]:.3f}")
    print(anchor(out.labeling, i, lam).values)


if __name__ == "__main__":
    main()
