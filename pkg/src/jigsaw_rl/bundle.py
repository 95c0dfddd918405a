"""On-disk puzzle bundles and solution files.

A bundle is a directory::

    manifest.json       grid, piece size, puzzle type, seed, piece file list
    ground_truth.json   optional; kept apart so solving is blind by default
    pieces/NNNN.png     lossless 8-bit RGB pieces in presentation order

All coordinates in files are 0-based ``(row, col)``; orientations are quarter
turns clockwise to apply to a presented piece so it sits upright in the
assembled image. JSON is written with sorted keys so equal content gives equal
bytes.
"""
from __future__ import annotations

import io
import json
import os
import tempfile
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .core import GridDims, PuzzleType
from .pictorial import PieceSet, cut_image, load_rgb, rotate_piece

BUNDLE_FORMAT = "jigsaw-rl/bundle"
TRUTH_FORMAT = "jigsaw-rl/ground-truth"
SOLUTION_FORMAT = "jigsaw-rl/solution"
VERSION = 1


class BundleError(ValueError):
    """Malformed or inconsistent bundle/solution input."""


def atomic_write_bytes(path: Path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path: Path, obj) -> None:
    atomic_write_bytes(path, (json.dumps(obj, indent=1, sort_keys=True) + "\n").encode())


def read_json(path: Path, fmt: str) -> dict:
    try:
        obj = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise BundleError(f"cannot read {path}: {exc}") from exc
    if obj.get("format") != fmt:
        raise BundleError(f"{path}: expected format {fmt!r}, got {obj.get('format')!r}")
    if obj.get("version") != VERSION:
        raise BundleError(f"{path}: unsupported version {obj.get('version')!r}")
    return obj


def write_png(path: Path, rgb: np.ndarray) -> None:
    buf = io.BytesIO()
    Image.fromarray(np.ascontiguousarray(rgb, dtype=np.uint8), "RGB").save(buf, format="PNG")
    atomic_write_bytes(path, buf.getvalue())


def _placements(raw, n: int, dims: GridDims, where: str) -> list[tuple[int, int, int]]:
    try:
        out = [(int(r), int(c), int(t)) for r, c, t in raw]
    except (TypeError, ValueError) as exc:
        raise BundleError(f"{where}: placements must be [row, col, orientation] triples") from exc
    if len(out) != n:
        raise BundleError(f"{where}: {len(out)} placements for {n} pieces")
    cells = {(r, c) for r, c, _ in out}
    if len(cells) != n or not all(dims.contains(p) for p in cells):
        raise BundleError(f"{where}: placements are not a bijection onto the grid")
    if any(not 0 <= t < 4 for _, _, t in out):
        raise BundleError(f"{where}: orientation out of range")
    return out


@dataclass
class Manifest:
    rows: int
    cols: int
    piece_size: int
    puzzle_type: int
    seed: int
    pieces: list[str]
    constant_tol: float = 0.5
    source: str = ""

    @property
    def dims(self) -> GridDims:
        return GridDims(self.rows, self.cols)

    def to_json(self) -> dict:
        return {"format": BUNDLE_FORMAT, "version": VERSION, **asdict(self)}


@dataclass
class GroundTruth:
    rows: int
    cols: int
    placements: list[tuple[int, int, int]]
    applied_rotation: list[int] = field(default_factory=list)

    @property
    def dims(self) -> GridDims:
        return GridDims(self.rows, self.cols)

    def to_json(self) -> dict:
        return {"format": TRUTH_FORMAT, "version": VERSION, "rows": self.rows, "cols": self.cols,
                "placements": [list(p) for p in self.placements],
                "applied_rotation": list(self.applied_rotation)}


@dataclass
class SolutionRecord:
    rows: int
    cols: int
    puzzle_type: int
    placements: list[tuple[int, int, int]]
    alc: float
    config: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)

    @property
    def dims(self) -> GridDims:
        return GridDims(self.rows, self.cols)

    def to_json(self) -> dict:
        return {"format": SOLUTION_FORMAT, "version": VERSION, "rows": self.rows, "cols": self.cols,
                "puzzle_type": self.puzzle_type, "placements": [list(p) for p in self.placements],
                "alc": self.alc, "config": self.config, "diagnostics": self.diagnostics}


class Bundle:
    def __init__(self, root: str | Path):
        self.root = Path(root)
        obj = read_json(self.root / "manifest.json", BUNDLE_FORMAT)
        try:
            self.manifest = Manifest(**{k: v for k, v in obj.items() if k not in ("format", "version")})
        except TypeError as exc:
            raise BundleError(f"{self.root}: bad manifest fields: {exc}") from exc
        m = self.manifest
        if m.puzzle_type not in (1, 2):
            raise BundleError(f"{self.root}: puzzle_type must be 1 or 2")
        if len(m.pieces) != m.rows * m.cols:
            raise BundleError(f"{self.root}: {len(m.pieces)} pieces for a {m.rows}x{m.cols} grid")
        missing = [p for p in m.pieces if not (self.root / p).is_file()]
        if missing:
            raise BundleError(f"{self.root}: missing piece files, e.g. {missing[0]}")

    @property
    def dims(self) -> GridDims:
        return self.manifest.dims

    @property
    def puzzle_type(self) -> PuzzleType:
        return PuzzleType(self.manifest.puzzle_type)

    def rgb_pieces(self) -> np.ndarray:
        P = self.manifest.piece_size
        out = np.stack([load_rgb(self.root / p) for p in self.manifest.pieces])
        if out.shape[1:3] != (P, P):
            raise BundleError(f"{self.root}: pieces are {out.shape[1:3]}, manifest says {P}x{P}")
        return out

    def piece_set(self) -> PieceSet:
        return PieceSet.from_rgb(self.rgb_pieces(), self.manifest.constant_tol)

    def has_ground_truth(self) -> bool:
        return (self.root / "ground_truth.json").is_file()

    def ground_truth(self) -> GroundTruth:
        path = self.root / "ground_truth.json"
        if not path.is_file():
            raise BundleError(f"{self.root}: no ground truth")
        obj = read_json(path, TRUTH_FORMAT)
        dims = GridDims(obj["rows"], obj["cols"])
        if dims != self.dims:
            raise BundleError(f"{path}: grid {dims} differs from manifest {self.dims}")
        pl = _placements(obj["placements"], dims.n_positions, dims, str(path))
        return GroundTruth(dims.rows, dims.cols, pl, [int(x) for x in obj.get("applied_rotation", [])])


def make_bundle(image: np.ndarray, out: str | Path, dims: GridDims, piece_size: int,
                puzzle_type: PuzzleType | int = PuzzleType.TYPE1, seed: int = 0,
                constant_tol: float = 0.5, source: str = "") -> Bundle:
    """Cut, shuffle (and for Type 2 rotate) an RGB image into a bundle directory."""
    puzzle_type = PuzzleType(puzzle_type)
    pieces, _ = cut_image(np.asarray(image, dtype=np.uint8)[..., :3], dims, piece_size)
    n = len(pieces)
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    rot = rng.integers(0, 4, n) if puzzle_type == PuzzleType.TYPE2 else np.zeros(n, dtype=np.int64)
    out = Path(out)
    names = []
    for k, (src, r) in enumerate(zip(perm, rot)):
        name = f"pieces/{k:04d}.png"
        write_png(out / name, rotate_piece(pieces[src], int(r)))
        names.append(name)
    truth = GroundTruth(dims.rows, dims.cols,
                        [(int(s) // dims.cols, int(s) % dims.cols, int(-r) % 4) for s, r in zip(perm, rot)],
                        [int(r) for r in rot])
    manifest = Manifest(dims.rows, dims.cols, piece_size, int(puzzle_type), int(seed), names,
                        float(constant_tol), source)
    write_json(out / "ground_truth.json", truth.to_json())
    write_json(out / "manifest.json", manifest.to_json())
    return Bundle(out)


def generate(image_path: str | Path, out: str | Path, dims: GridDims, piece_size: int,
             puzzle_type: PuzzleType | int = PuzzleType.TYPE1, seed: int = 0,
             constant_tol: float = 0.5) -> Bundle:
    try:
        image = load_rgb(image_path)
    except OSError as exc:
        raise BundleError(f"cannot read image {image_path}: {exc}") from exc
    try:
        return make_bundle(image, out, dims, piece_size, puzzle_type, seed, constant_tol,
                           Path(image_path).name)
    except ValueError as exc:
        raise BundleError(str(exc)) from exc


def write_solution(path: str | Path, sol: SolutionRecord) -> None:
    write_json(Path(path), sol.to_json())


def read_solution(path: str | Path) -> SolutionRecord:
    obj = read_json(Path(path), SOLUTION_FORMAT)
    dims = GridDims(obj["rows"], obj["cols"])
    pl = _placements(obj["placements"], dims.n_positions, dims, str(path))
    return SolutionRecord(dims.rows, dims.cols, int(obj["puzzle_type"]), pl, float(obj["alc"]),
                          obj.get("config", {}), obj.get("diagnostics", {}))


def render(placements, rgb_pieces: np.ndarray, dims: GridDims) -> np.ndarray:
    """Paste each piece, rotated by its orientation, at its solved position."""
    P = rgb_pieces.shape[1]
    canvas = np.zeros((dims.rows * P, dims.cols * P, 3), dtype=np.uint8)
    for piece, (r, c, t) in zip(rgb_pieces, placements):
        canvas[r * P:(r + 1) * P, c * P:(c + 1) * P] = rotate_piece(piece, t)
    return canvas
