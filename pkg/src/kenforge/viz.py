"""Static artifacts: tri-panel parameter grids (PGM/CSV) and overlap tables.

Grids use one cell per parameter. In PGM output a retained parameter is
black (0) and everything else white (255).
"""

import csv
import os
from typing import Dict, Iterable, List, Tuple

import numpy as np

from .analysis import OverlapReport
from .utils import check_mask

__all__ = ["PANELS", "to_grid", "downsample", "write_pgm", "read_pgm", "emit_tri_panel",
           "emit_overlap_table"]

PANELS = ("common", "a_only", "b_only")
BLACK, WHITE = 0, 255


def downsample(mask, stride: int):
    """Block-reduce a mask: a block is set if any of its cells is set. Lossy."""
    mask = check_mask(mask)
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    if stride == 1:
        return mask
    rows, cols = mask.shape
    pr, pc = -rows % stride, -cols % stride
    padded = np.pad(mask, ((0, pr), (0, pc)))
    return padded.reshape(padded.shape[0] // stride, stride,
                          padded.shape[1] // stride, stride).any(axis=(1, 3))


def to_grid(mask) -> np.ndarray:
    """Palette-index image (uint8) of a mask, one byte per cell."""
    return np.where(check_mask(mask), BLACK, WHITE).astype(np.uint8)


def write_pgm(grid, path):
    grid = np.asarray(grid, dtype=np.uint8)
    height, width = grid.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{width} {height}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(grid).tobytes())


def read_pgm(path) -> np.ndarray:
    """Read a binary (P5, maxval 255) PGM as written by :func:`write_pgm`."""
    with open(path, "rb") as fh:
        data = fh.read()
    parts = data.split(b"\n", 3)
    if len(parts) < 4 or parts[0] != b"P5" or parts[2] != b"255":
        raise ValueError(f"{path}: not a P5/255 PGM file")
    width, height = (int(v) for v in parts[1].split())
    payload = parts[3]
    if len(payload) != width * height:
        raise ValueError(f"{path}: payload has {len(payload)} bytes, expected {width * height}")
    return np.frombuffer(payload, dtype=np.uint8).reshape(height, width)


def _write_csv_panel(mask, path, panel):
    with open(path, "w", newline="") as fh:
        # sidecar count for consumers that want totals without re-summing
        fh.write(f"# panel={panel} retained={int(mask.sum())}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"c{j}" for j in range(mask.shape[1])])
        w.writerows(mask.astype(np.uint8).tolist())


def emit_tri_panel(common, a_only, b_only, out_prefix, format="pgm", stride=1) -> List[str]:
    """Write ``<out_prefix>.{common,a_only,b_only}.<format>`` and return the paths."""
    if format not in ("pgm", "csv"):
        raise ValueError(f"format must be 'pgm' or 'csv', got {format!r}")
    panels = [check_mask(m) for m in (common, a_only, b_only)]
    if len({p.shape for p in panels}) != 1:
        raise ValueError(f"panel shapes differ: {[p.shape for p in panels]}")
    parent = os.path.dirname(os.fspath(out_prefix))
    if parent:
        os.makedirs(parent, exist_ok=True)
    paths = []
    for panel, mask in zip(PANELS, panels):
        mask = downsample(mask, stride)
        path = f"{os.fspath(out_prefix)}.{panel}.{format}"
        if format == "pgm":
            write_pgm(to_grid(mask), path)
        else:
            _write_csv_panel(mask, path, panel)
        paths.append(path)
    return paths


def emit_overlap_table(reports: Iterable[OverlapReport], out) -> None:
    """Write overlap percentages in the layout ``Subnet A, Subnet B, <model>...``.

    Pairs are unordered: ``(GB, AU)`` and ``(AU, GB)`` share the row
    ``AU,GB``. Rows are sorted by pair and model columns keep first-seen
    order; missing cells are left empty. Repeating a pair/model with a
    different percentage is an error.
    """
    models: List[str] = []
    cells: Dict[Tuple[str, str], Dict[str, float]] = {}
    for rep in reports:
        pair = tuple(sorted(rep.pair))
        if rep.model not in models:
            models.append(rep.model)
        row = cells.setdefault(pair, {})
        if rep.model in row and row[rep.model] != rep.overlap_pct:
            raise ValueError(
                f"conflicting duplicate pair {pair} for {rep.model!r}: "
                f"{row[rep.model]} vs {rep.overlap_pct}")
        row[rep.model] = rep.overlap_pct
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["Subnet A", "Subnet B", *models])
        for pair in sorted(cells):
            row = cells[pair]
            w.writerow([*pair, *(f"{row[m]:.2f}" if m in row else "" for m in models)])
