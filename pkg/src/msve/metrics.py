"""Visitation heatmaps and coverage summaries.

A square count grid over the map bounds; every recorded state increments
exactly one cell (floor binning, boundary states clamp to the last cell).
Coverage is the fraction of free-region cells visited at least once, the
scalar stand-in for "how much of the map got shaded".
"""

import csv
from dataclasses import dataclass

import numpy as np

from .env import RoomMap

DEFAULT_CELLS = 50


@dataclass
class VisitGrid:
    """counts[iy, ix] with iy = floor(y / side * cells); row 0 is the south edge."""

    counts: np.ndarray
    side: float

    @classmethod
    def create(cls, side: float, cells: int = DEFAULT_CELLS) -> "VisitGrid":
        return cls(counts=np.zeros((cells, cells), dtype=np.int64), side=side)

    @property
    def cells(self) -> int:
        return self.counts.shape[0]

    @property
    def total_visits(self) -> int:
        return int(self.counts.sum())

    def accumulate(self, states: np.ndarray) -> "VisitGrid":
        """Add one count per state; returns self for chaining."""
        states = np.asarray(states, dtype=np.float64)
        if states.size == 0:
            return self
        scale = self.cells / self.side
        ix = np.clip((states[:, 0] * scale).astype(np.int64), 0, self.cells - 1)
        iy = np.clip((states[:, 1] * scale).astype(np.int64), 0, self.cells - 1)
        np.add.at(self.counts, (iy, ix), 1)
        return self

    def merge(self, other: "VisitGrid") -> "VisitGrid":
        self.counts += other.counts
        return self


def free_cell_mask(geometry: RoomMap, cells: int = DEFAULT_CELLS) -> np.ndarray:
    """Boolean (cells, cells) mask of grid cells whose center lies in the free region."""
    width = geometry.side / cells
    centers_1d = (np.arange(cells) + 0.5) * width
    xs, ys = np.meshgrid(centers_1d, centers_1d)
    points = np.stack([xs.ravel(), ys.ravel()], axis=1)
    return geometry.contains_points(points).reshape(cells, cells)


def coverage(grid: VisitGrid, geometry: RoomMap) -> float:
    """Fraction of free-region cells with at least one visit, in [0, 1]."""
    mask = free_cell_mask(geometry, grid.cells)
    return float((grid.counts[mask] > 0).sum() / mask.sum())


def entropy_curve(rows) -> np.ndarray:
    """Per-epoch mean batch entropy from pretraining log rows."""
    return np.array([float(r["mean_entropy"]) for r in rows])


def write_heatmap_csv(path, grid: VisitGrid) -> None:
    """G rows of G comma-separated integer counts, row 0 first."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        for row in grid.counts:
            writer.writerow([int(v) for v in row])


def read_heatmap_csv(path) -> np.ndarray:
    with open(path, newline="") as f:
        return np.array([[int(v) for v in row] for row in csv.reader(f)], dtype=np.int64)


def write_heatmap_pgm(path, grid: VisitGrid) -> None:
    """Binary 8-bit PGM, max-count normalized, north edge on the top row."""
    counts = grid.counts
    peak = counts.max()
    if peak > 0:
        pixels = np.round(counts * (255.0 / peak)).astype(np.uint8)
    else:
        pixels = np.zeros_like(counts, dtype=np.uint8)
    # Flip so increasing y in the map points up in the image.
    pixels = pixels[::-1, :]
    with open(path, "wb") as f:
        f.write(f"P5\n{grid.cells} {grid.cells}\n255\n".encode("ascii"))
        f.write(pixels.tobytes())
