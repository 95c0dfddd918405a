"""Piece rasters, CIELAB conversion and the Mahalanobis gradient dissimilarity."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .core import GridDims, PuzzleType, Relation

# sRGB (IEC 61966-2-1) primaries to CIE XYZ, D65.
SRGB_TO_XYZ = np.array([
    [0.412453, 0.357580, 0.180423],
    [0.212671, 0.715160, 0.072169],
    [0.019334, 0.119193, 0.950227],
])
D65_WHITE = np.array([0.95047, 1.0, 1.08883])

COV_REG = 1e-6
# Extra samples added to every gradient population before estimating its covariance.
DUMMY_GRADIENTS = np.array([
    [0.0, 0.0, 0.0],
    [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0],
    [-1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, -1.0],
])


def srgb_to_cielab(rgb) -> np.ndarray:
    """Convert 8-bit sRGB values (any leading shape, last axis 3) to L*a*b*.

    >>> srgb_to_cielab([255, 255, 255]).round(2)
    array([100.,  -0.,  -0.])
    """
    c = np.asarray(rgb, dtype=np.float64) / 255.0
    lin = np.where(c <= 0.04045, c / 12.92, ((c + 0.055) / 1.055) ** 2.4)
    xyz = lin @ SRGB_TO_XYZ.T / D65_WHITE
    delta = 6.0 / 29.0
    f = np.where(xyz > delta ** 3, np.cbrt(xyz), xyz / (3 * delta ** 2) + 4.0 / 29.0)
    L = 116.0 * f[..., 1] - 16.0
    a = 500.0 * (f[..., 0] - f[..., 1])
    b = 200.0 * (f[..., 1] - f[..., 2])
    return np.stack([L, a, b], axis=-1)


def load_rgb(path: str | Path) -> np.ndarray:
    """Read a PNG/JPEG as an ``(H, W, 3)`` uint8 array; alpha is dropped."""
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8)


def rotate_piece(raster: np.ndarray, quarter_turns: int) -> np.ndarray:
    """Rotate a raster clockwise by ``quarter_turns * 90`` degrees."""
    return np.rot90(raster, k=-(quarter_turns % 4), axes=(0, 1))


def cut_image(image: np.ndarray, dims: GridDims, piece_size: int):
    """Cut ``image`` into ``dims.rows x dims.cols`` square pieces in row-major order.

    Excess pixels on the right and bottom are cropped. Returns the
    ``(n, P, P, C)`` piece stack and the identity placement
    ``[(row, col, 0), ...]``.
    """
    P = piece_size
    H, W = image.shape[:2]
    if P < 1 or H < P or W < P:
        raise ValueError(f"image {H}x{W} is smaller than one {P}x{P} piece")
    if H < dims.rows * P or W < dims.cols * P:
        raise ValueError(f"image {H}x{W} cannot hold a {dims.rows}x{dims.cols} grid of {P}px pieces")
    crop = image[:dims.rows * P, :dims.cols * P]
    pieces = (crop.reshape(dims.rows, P, dims.cols, P, *image.shape[2:])
              .swapaxes(1, 2)
              .reshape(dims.rows * dims.cols, P, P, *image.shape[2:]))
    placement = [(r, c, 0) for r in range(dims.rows) for c in range(dims.cols)]
    return pieces.copy(), placement


def detect_constant_pieces(lab_pieces: np.ndarray, tol: float = 1e-6) -> np.ndarray:
    """Flag pieces whose per-channel spread (max - min) is at most ``tol``."""
    flat = lab_pieces.reshape(len(lab_pieces), -1, lab_pieces.shape[-1])
    spread = flat.max(axis=1) - flat.min(axis=1)
    return np.all(spread <= tol, axis=1)


@dataclass
class PieceSet:
    lab: np.ndarray  # (n, P, P, 3) CIELAB
    constant_flags: np.ndarray = field(default=None)
    rgb: np.ndarray | None = None

    def __post_init__(self):
        if self.lab.ndim != 4 or self.lab.shape[1] != self.lab.shape[2]:
            raise ValueError(f"expected (n, P, P, 3) square pieces, got {self.lab.shape}")
        if self.constant_flags is None:
            self.constant_flags = detect_constant_pieces(self.lab)

    @classmethod
    def from_rgb(cls, rgb_pieces: np.ndarray, constant_tol: float = 1e-6) -> "PieceSet":
        lab = srgb_to_cielab(rgb_pieces)
        return cls(lab, detect_constant_pieces(lab, constant_tol), rgb_pieces)

    @property
    def n(self) -> int:
        return len(self.lab)

    @property
    def piece_size(self) -> int:
        return self.lab.shape[1]


def _gradient_model(samples: np.ndarray):
    """Mean of ``samples`` and the inverse of their regularized covariance."""
    mu = samples.mean(axis=0)
    aug = np.vstack([samples, DUMMY_GRADIENTS])
    cov = np.cov(aug, rowvar=False) + COV_REG * np.eye(3)
    return mu, np.linalg.inv(cov)


@dataclass
class _EdgeModel:
    """Gradient statistics at the right edge of a piece (the side facing the seam)."""

    edge: np.ndarray        # (P, 3) last column
    across_mu: np.ndarray
    across_w: np.ndarray
    along_mu: np.ndarray
    along_w: np.ndarray


def _edge_model(raster: np.ndarray) -> _EdgeModel:
    last, prev = raster[:, -1], raster[:, -2]
    across = last - prev
    along = np.diff(across, axis=0)
    amu, aw = _gradient_model(across)
    lmu, lw = _gradient_model(along)
    return _EdgeModel(last, amu, aw, lmu, lw)


def _mahalanobis_sum(d: np.ndarray, w: np.ndarray) -> np.ndarray:
    return np.einsum("...pc,cd,...pd->...", d, w, d)


def _one_sided(left: _EdgeModel, right_first: np.ndarray) -> float:
    seam = right_first - left.edge
    across = _mahalanobis_sum(seam - left.across_mu, left.across_w)
    along = _mahalanobis_sum(np.diff(seam, axis=0) - left.along_mu, left.along_w)
    return float(across + along)


def _mgc_right(a: np.ndarray, b: np.ndarray) -> float:
    """Dissimilarity of ``b`` placed immediately right of ``a``."""
    ma = _edge_model(a)
    mb = _edge_model(np.rot90(b, 2))
    return _one_sided(ma, b[:, 0]) + _one_sided(mb, np.rot90(a, 2)[:, 0])


def mgc_dissimilarity(a: np.ndarray, b: np.ndarray, relation: Relation) -> float:
    """Mahalanobis gradient dissimilarity of placing ``b`` in ``relation`` to ``a``.

    For the right relation the seam gradient ``b[:, 0] - a[:, -1]`` is scored
    against the distribution of ``a``'s own across-edge gradients
    ``a[:, -1] - a[:, -2]``, and the variation of the seam gradient along the
    boundary is scored against the variation of ``a``'s edge gradients along
    the same edge. The mirrored terms for ``b`` are added. Other relations are
    evaluated by rotating both pieces so the relation becomes "right".
    """
    if a.shape != b.shape:
        raise ValueError("pieces must have equal size")
    k = int(relation)
    return _mgc_right(rotate_piece(a, -k), rotate_piece(b, -k))


def _right_table(rasters: np.ndarray, owner: np.ndarray) -> np.ndarray:
    """Right-relation dissimilarity between all raster pairs; ``inf`` where owners coincide."""
    K = len(rasters)
    left_models = [_edge_model(r) for r in rasters]
    right_models = [_edge_model(np.rot90(r, 2)) for r in rasters]
    firsts = rasters[:, :, 0]                               # (K, P, 3)
    flipped_firsts = np.stack([m.edge for m in left_models])[:, ::-1]
    D = np.zeros((K, K))
    for u, mu in enumerate(left_models):
        seam = firsts - mu.edge                            # (K, P, 3)
        D[u] += _mahalanobis_sum(seam - mu.across_mu, mu.across_w)
        D[u] += _mahalanobis_sum(np.diff(seam, axis=1) - mu.along_mu, mu.along_w)
    for v, mv in enumerate(right_models):
        seam = flipped_firsts - mv.edge
        D[:, v] += _mahalanobis_sum(seam - mv.across_mu, mv.across_w)
        D[:, v] += _mahalanobis_sum(np.diff(seam, axis=1) - mv.along_mu, mv.along_w)
    D[owner[:, None] == owner[None, :]] = np.inf
    return D


def node_rasters(lab_pieces: np.ndarray, puzzle_type: PuzzleType) -> np.ndarray:
    """Stack of the rasters behind each compatibility node.

    Type 1 nodes are the pieces themselves; Type 2 node ``4*i + t`` is piece
    ``i`` rotated clockwise by ``t`` quarter turns.
    """
    if puzzle_type == PuzzleType.TYPE1:
        return lab_pieces
    return np.stack([rotate_piece(p, t) for p in lab_pieces for t in range(4)])


def relation_permutation(n_pieces: int, relation: Relation) -> np.ndarray:
    """Node permutation taking Type 2 node ``(i, t)`` to ``(i, t - relation)``."""
    i, t = np.divmod(np.arange(4 * n_pieces), 4)
    return 4 * i + (t - int(relation)) % 4


def dissimilarity_table(pieces: PieceSet | np.ndarray, puzzle_type: PuzzleType = PuzzleType.TYPE1) -> np.ndarray:
    """Dissimilarities for every node pair and relation, shape ``(4, K, K)``.

    ``D[R, u, v]`` is the dissimilarity of placing node ``v`` in relation ``R``
    to node ``u`` (``K = n`` for Type 1, ``4n`` for Type 2). Pairs of nodes
    belonging to the same piece are ``inf``. Only the right relation is
    evaluated on pixels; the others follow from rotating both nodes.
    """
    lab = pieces.lab if isinstance(pieces, PieceSet) else np.asarray(pieces, dtype=np.float64)
    n = len(lab)
    if n < 2:
        raise ValueError("need at least two pieces")
    if puzzle_type == PuzzleType.TYPE1:
        out = np.empty((4, n, n))
        owner = np.arange(n)
        for rel in Relation:
            rotated = np.stack([rotate_piece(p, -int(rel)) for p in lab])
            out[rel] = _right_table(rotated, owner)
        return out
    rasters = node_rasters(lab, puzzle_type)
    owner = np.repeat(np.arange(n), 4)
    right = _right_table(rasters, owner)
    out = np.empty((4,) + right.shape)
    for rel in Relation:
        perm = relation_permutation(n, rel)
        out[rel] = right[np.ix_(perm, perm)]
    return out
