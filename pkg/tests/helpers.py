"""Shared fixtures-by-function for the test suite: images, synthetic tables, oracles."""
from __future__ import annotations

import functools
import itertools

import numpy as np
from PIL import Image

from jigsaw_rl.core import GridDims, Labeling, ProblemInstance, PuzzleType

OFFSETS = {0: (0, 1), 1: (1, 0), 2: (0, -1), 3: (-1, 0)}  # right, down, left, up


@functools.cache
def natural_image(name: str) -> np.ndarray:
    """RGB uint8 photo shipped with scikit-image or scikit-learn."""
    if name in ("china", "flower"):
        from sklearn.datasets import load_sample_image
        return load_sample_image(f"{name}.jpg")
    from skimage import data
    img = getattr(data, name)()
    if isinstance(img, tuple):     # stereo pairs
        img = img[0]
    return np.ascontiguousarray(img[..., :3])


def resized(img: np.ndarray, height: int, width: int) -> np.ndarray:
    return np.asarray(Image.fromarray(img).resize((width, height), Image.LANCZOS))


PHOTOS = ("astronaut", "coffee", "chelsea", "rocket", "china")


def photo_crop(rng: np.random.Generator, height: int, width: int) -> np.ndarray:
    """Random crop from one of the bundled photos, downsampled 2x for smoothness."""
    img = natural_image(PHOTOS[rng.integers(len(PHOTOS))])
    H, W = img.shape[:2]
    if H < 2 * height or W < 2 * width:
        img = resized(img, max(H, 2 * height), max(W, 2 * width))
        H, W = img.shape[:2]
    r = rng.integers(0, H - 2 * height + 1)
    c = rng.integers(0, W - 2 * width + 1)
    return resized(img[r:r + 2 * height, c:c + 2 * width], height, width)


def with_white_block(img: np.ndarray, piece_size: int, cells: int = 3) -> np.ndarray:
    """Paint the first ``cells`` pieces of the top row pure white."""
    out = img.copy()
    out[:piece_size, :cells * piece_size] = 255
    return out


def true_neighbor_table(dims: GridDims, puzzle_type: PuzzleType = PuzzleType.TYPE1,
                        background: float = 0.0) -> np.ndarray:
    """Compatibility 1 for the true neighbor of every piece in its identity placement.

    Piece ``k`` belongs at position ``k``. For Type 2 the table is rotation
    covariant: node ``4k+t`` (piece k turned t quarter turns clockwise) gets 1
    against node ``4l+t`` where ``l`` is k's true neighbor in the direction
    obtained by turning R back by t.
    """
    n = dims.n_positions
    O = 1 if puzzle_type == PuzzleType.TYPE1 else 4
    K = n * O
    C = np.full((4, K, K), background)
    for k in range(n):
        r, c = divmod(k, dims.cols)
        for t in range(O):
            for R in range(4):
                dr, dc = OFFSETS[(R - t) % 4]
                rr, cc = r + dr, c + dc
                if 0 <= rr < dims.rows and 0 <= cc < dims.cols:
                    l = rr * dims.cols + cc
                    C[R, k * O + t, l * O + t] = 1.0
    owner = np.arange(K) // O
    C[:, owner[:, None] == owner[None, :]] = 0.0
    return C


def random_symmetric_table(rng: np.random.Generator, K: int, n_orient: int = 1) -> np.ndarray:
    C = rng.random((4, K, K))
    C[2] = C[0].T
    C[3] = C[1].T
    owner = np.arange(K) // n_orient
    C[:, owner[:, None] == owner[None, :]] = 0.0
    return C


def random_interior_labeling(rng: np.random.Generator, instance: ProblemInstance) -> Labeling:
    vals = rng.dirichlet(np.ones(instance.m), size=instance.n)
    return Labeling(instance, vals)


def dense_support(values: np.ndarray, table: np.ndarray, dims: GridDims,
                  puzzle_type: PuzzleType) -> np.ndarray:
    """Brute-force ``q_i(l) = sum_j sum_mu r_ij(l, mu) p_j(mu)`` straight from positions."""
    O = 1 if puzzle_type == PuzzleType.TYPE1 else 4
    n = dims.n_positions
    m = n * O
    q = np.zeros((n, m))
    for i in range(n):
        for lam in range(m):
            pa, ta = divmod(lam, O)
            ra, ca = divmod(pa, dims.cols)
            total = 0.0
            for j in range(n):
                if j == i:
                    continue
                for mu in range(m):
                    pb, tb = divmod(mu, O)
                    rb, cb = divmod(pb, dims.cols)
                    for R, (dr, dc) in OFFSETS.items():
                        if (rb - ra, cb - ca) == (dr, dc):
                            total += table[R, i * O + ta, j * O + tb] * values[j, mu]
            q[i, lam] = total
    return q


def adjacency_score(placement, table: np.ndarray, dims: GridDims) -> float:
    """Sum of right/down compatibilities realized by a Type 1 placement."""
    at = {(r, c): i for i, (r, c, _) in enumerate(placement)}
    s = 0.0
    for (r, c), i in at.items():
        if (r, c + 1) in at:
            s += table[0, i, at[(r, c + 1)]]
        if (r + 1, c) in at:
            s += table[1, i, at[(r + 1, c)]]
    return s


def exhaustive_optimum(table: np.ndarray, dims: GridDims) -> float:
    n = dims.n_positions
    best = -np.inf
    for perm in itertools.permutations(range(n)):
        placement = [(p // dims.cols, p % dims.cols, 0) for p in perm]
        best = max(best, adjacency_score(placement, table, dims))
    return best
