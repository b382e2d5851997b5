"""Random test scenes shared by module tests and the acceptance suite."""
from __future__ import annotations

import math

import numpy as np

from octonav.grid import Grid2D
from octonav.planners import footprint_blocked

RES = 0.2
SIZE = 100  # 20 m at 0.2 m


def random_obstacle_map(rng: np.random.Generator, max_obstacles: int = 8) -> Grid2D:
    """20 x 20 m free grid with 1..max_obstacles axis-aligned occupied boxes."""
    states = -np.ones((SIZE, SIZE), dtype=np.int8)
    for _ in range(int(rng.integers(1, max_obstacles + 1))):
        cx, cy = rng.uniform(3, 17, 2)
        w, h = rng.uniform(0.4, 3.0, 2)
        i0, i1 = int((cx - w / 2) / RES), int((cx + w / 2) / RES)
        j0, j1 = int((cy - h / 2) / RES), int((cy + h / 2) / RES)
        states[i0:i1 + 1, j0:j1 + 1] = 1
    return Grid2D((0.0, 0.0), RES, states)


def pick_endpoints(rng, grid: Grid2D, footprint: float = 0.4, clearance: float = 1.0, min_dist: float = 5.0):
    """Start pose (heading at the goal) and goal with room to turn around both."""
    roomy = ~footprint_blocked(grid, footprint + clearance)
    while True:
        s = rng.uniform(1, 19, 2)
        g = rng.uniform(1, 19, 2)
        si = tuple(int(v) for v in grid.cell_of(*s))
        gi = tuple(int(v) for v in grid.cell_of(*g))
        if roomy[si] and roomy[gi] and math.hypot(*(g - s)) > min_dist:
            th = math.atan2(g[1] - s[1], g[0] - s[0])
            return (float(s[0]), float(s[1]), th), (float(g[0]), float(g[1])), si, gi


def synthetic_samples(rng, n, grid, tau_i=2, tau_o=3, run_id=0):
    """Random but well-formed samples: ternary windows, small route offsets, in-window labels."""
    from octonav.dataset import SampleSequence, cell_centers_ego, to_global

    out = []
    for k in range(n):
        labels = rng.integers(0, grid.n_classes, tau_o)
        anchor = np.array([rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-np.pi, np.pi)])
        out.append(SampleSequence(
            windows=rng.integers(-1, 2, (tau_i + 1, grid.width, grid.height)).astype(np.int8),
            ref_window=rng.normal(0, 0.5, (tau_i + tau_o + 1, 2)),
            labels=labels,
            anchor_pose=anchor,
            future=to_global(cell_centers_ego(labels, grid), anchor),
            run_id=run_id,
            tick=k,
        ))
    return out
