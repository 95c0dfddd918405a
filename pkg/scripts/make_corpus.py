"""Build bundle corpora from the sample photos bundled with scikit-image / scikit-learn.

    python3 scripts/make_corpus.py natural out/natural      # 5 x 432-piece Type 1 bundles
    python3 scripts/make_corpus.py natural out/natural2 --type 2
    python3 scripts/make_corpus.py crops out/crops --count 20 --seed 3
"""
from __future__ import annotations

import argparse
from pathlib import Path

import numpy as np
from PIL import Image

from jigsaw_rl.bundle import make_bundle
from jigsaw_rl.core import GridDims

NATURAL = ("astronaut", "coffee", "rocket", "chelsea", "china")
P = 28


def photo(name: str) -> np.ndarray:
    if name in ("china", "flower"):
        from sklearn.datasets import load_sample_image
        return load_sample_image(f"{name}.jpg")
    from skimage import data
    return np.ascontiguousarray(getattr(data, name)()[..., :3])


def fit(img: np.ndarray, height: int, width: int) -> np.ndarray:
    return np.asarray(Image.fromarray(img).resize((width, height), Image.LANCZOS))


def natural(out: Path, puzzle_type: int, rows: int, cols: int, seed: int) -> None:
    for idx, name in enumerate(NATURAL):
        img = fit(photo(name), rows * P, cols * P)
        make_bundle(img, out / name, GridDims(rows, cols), P, puzzle_type, seed ^ idx, source=name)
        print(f"{name}: {rows}x{cols} -> {out / name}")


def crops(out: Path, puzzle_type: int, count: int, seed: int) -> None:
    rng = np.random.default_rng(seed)
    shapes = [(2, 2), (2, 3), (3, 3), (3, 4), (4, 4), (5, 5), (6, 8)]
    for k in range(count):
        rows, cols = shapes[k % len(shapes)]
        img = photo(NATURAL[rng.integers(len(NATURAL))])
        h, w = 2 * rows * P, 2 * cols * P
        if img.shape[0] < h or img.shape[1] < w:
            img = fit(img, max(h, img.shape[0]), max(w, img.shape[1]))
        r = rng.integers(0, img.shape[0] - h + 1)
        c = rng.integers(0, img.shape[1] - w + 1)
        crop = fit(img[r:r + h, c:c + w], rows * P, cols * P)
        make_bundle(crop, out / f"crop{k:02d}", GridDims(rows, cols), P, puzzle_type, seed ^ k)
    print(f"wrote {count} bundles to {out}")


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("kind", choices=("natural", "crops"))
    ap.add_argument("out", type=Path)
    ap.add_argument("--type", type=int, choices=(1, 2), default=1)
    ap.add_argument("--rows", type=int, default=18)
    ap.add_argument("--cols", type=int, default=24)
    ap.add_argument("--count", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    if args.kind == "natural":
        natural(args.out, args.type, args.rows, args.cols, args.seed)
    else:
        crops(args.out, args.type, args.count, args.seed)


if __name__ == "__main__":
    main()
