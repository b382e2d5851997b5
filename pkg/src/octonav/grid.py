"""Axis-aligned 2D tri-state grid shared by the map, planner and simulator."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidGeometry


class CellState(enum.IntEnum):
    FREE = -1
    UNKNOWN = 0
    OCCUPIED = 1


@dataclass
class Grid2D:
    """states[i, j] covers [x0 + i*res, x0 + (i+1)*res) x [y0 + j*res, y0 + (j+1)*res)."""

    origin: tuple[float, float]
    resolution: float
    states: np.ndarray

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=np.int8)
        if self.states.ndim != 2:
            raise InvalidGeometry("grid states must be 2D")

    @classmethod
    def unknown(cls, origin, resolution, shape) -> "Grid2D":
        return cls(tuple(map(float, origin)), float(resolution), np.zeros(shape, dtype=np.int8))

    @property
    def shape(self):
        return self.states.shape

    @property
    def extent(self):
        x0, y0 = self.origin
        nx, ny = self.states.shape
        return (x0, y0, x0 + nx * self.resolution, y0 + ny * self.resolution)

    def cell_of(self, x, y):
        """Integer cell indices (possibly outside the grid) for world coordinates."""
        i = np.floor((np.asarray(x, dtype=float) - self.origin[0]) / self.resolution).astype(np.int64)
        j = np.floor((np.asarray(y, dtype=float) - self.origin[1]) / self.resolution).astype(np.int64)
        return i, j

    def inside(self, i, j):
        nx, ny = self.states.shape
        return (i >= 0) & (i < nx) & (j >= 0) & (j < ny)

    def center(self, i, j):
        return (self.origin[0] + (np.asarray(i) + 0.5) * self.resolution,
                self.origin[1] + (np.asarray(j) + 0.5) * self.resolution)

    def states_at(self, x, y, outside=CellState.UNKNOWN) -> np.ndarray:
        i, j = self.cell_of(x, y)
        ok = self.inside(i, j)
        out = np.full(np.shape(i), int(outside), dtype=np.int8)
        out[ok] = self.states[i[ok], j[ok]]
        return out

    def state_at(self, x: float, y: float) -> CellState:
        return CellState(int(self.states_at(np.array([x]), np.array([y]))[0]))

    def coarsen(self, k: int) -> "Grid2D":
        """Merge 2^k x 2^k blocks: occupied if any occupied, else free if any free."""
        if k < 1:
            raise InvalidGeometry("coarsening level must be >= 1")
        f = 2 ** k
        nx, ny = self.states.shape
        px, py = -nx % f, -ny % f
        s = np.pad(self.states, ((0, px), (0, py)))
        blocks = s.reshape((nx + px) // f, f, (ny + py) // f, f)
        occ = (blocks == CellState.OCCUPIED).any(axis=(1, 3))
        free = (blocks == CellState.FREE).any(axis=(1, 3))
        out = np.where(occ, CellState.OCCUPIED, np.where(free, CellState.FREE, CellState.UNKNOWN))
        return Grid2D(self.origin, self.resolution * f, out.astype(np.int8))

    def crop(self, xmin: float, ymin: float, xmax: float, ymax: float) -> "Grid2D":
        """Sub-grid covering the given box, aligned to this grid's cells; unknown outside."""
        i0, j0 = (int(v) for v in self.cell_of(xmin, ymin))
        i1 = int(math.ceil((xmax - self.origin[0]) / self.resolution))
        j1 = int(math.ceil((ymax - self.origin[1]) / self.resolution))
        out = np.zeros((max(i1 - i0, 1), max(j1 - j0, 1)), dtype=np.int8)
        nx, ny = self.states.shape
        a0, a1 = max(i0, 0), min(i1, nx)
        b0, b1 = max(j0, 0), min(j1, ny)
        if a0 < a1 and b0 < b1:
            out[a0 - i0:a1 - i0, b0 - j0:b1 - j0] = self.states[a0:a1, b0:b1]
        x0 = self.origin[0] + i0 * self.resolution
        y0 = self.origin[1] + j0 * self.resolution
        return Grid2D((x0, y0), self.resolution, out)
