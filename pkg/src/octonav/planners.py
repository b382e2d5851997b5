"""Hybrid A* over a projected tri-state grid with skid-steer arc primitives."""
from __future__ import annotations

import csv
import heapq
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import dijkstra

from .errors import InvalidGeometry, InvalidGoal, InvalidStart, NoPath
from .grid import CellState, Grid2D
from .kinematics import ControlSignal, EgoState, KinematicParams, body_to_wheel, step_exact, wrap_angle


@dataclass(frozen=True)
class Primitive:
    v_x: float
    omega_z: float
    duration: float

    @property
    def length(self) -> float:
        return abs(self.v_x) * self.duration

    def apply(self, pose, duration=None):
        s = step_exact(EgoState(*pose), ControlSignal(self.v_x, self.omega_z),
                       self.duration if duration is None else duration)
        return (s.X, s.Y, s.theta)


@dataclass(frozen=True)
class PrimitiveSet:
    primitives: tuple
    kappa_max: float

    def __iter__(self):
        return iter(self.primitives)

    def __len__(self):
        return len(self.primitives)


def motion_primitives(params: KinematicParams, v_x: float = 1.0, n_curvatures: int = 5,
                      duration: float = 0.4) -> PrimitiveSet:
    """Forward arcs with curvatures evenly spaced in [-kappa_max, kappa_max]."""
    if n_curvatures < 1 or n_curvatures % 2 == 0:
        raise InvalidGeometry("n_curvatures must be a positive odd number")
    if not (v_x > 0 and duration > 0):
        raise InvalidGeometry("primitives need v_x > 0 and duration > 0")
    w_max = params.max_yaw_rate(v_x)
    half = n_curvatures // 2
    prims = []
    for k in range(-half, half + 1):
        w = 0.0 if k == 0 else w_max * k / half
        body_to_wheel(ControlSignal(v_x, w), params)
        prims.append(Primitive(v_x, w, duration))
    return PrimitiveSet(tuple(prims), w_max / v_x)


@dataclass(frozen=True)
class PlannerConfig:
    theta_bins: int = 36
    footprint_radius: float = 0.4
    unknown_penalty: float = 1.5
    goal_tolerance: float | None = None
    max_expansions: int = 200_000


@dataclass
class PlanResult:
    poses: np.ndarray
    g: np.ndarray
    controls: list = field(default_factory=list)
    expansions: int = 0

    @property
    def cost(self) -> float:
        return float(self.g[-1])

    @property
    def length(self) -> float:
        return float(sum(p.length for p in self.controls))

    def dense(self, spacing: float) -> np.ndarray:
        """Poses along the path at <= spacing arc-length steps, including both ends."""
        out = [tuple(self.poses[0])]
        for pose, prim in zip(self.poses[:-1], self.controls):
            n = max(1, math.ceil(prim.length / spacing))
            for k in range(1, n + 1):
                out.append(prim.apply(tuple(pose), prim.duration * k / n))
        return np.array(out)

    def points_at(self, distances) -> np.ndarray:
        """(x, y) at the given arc lengths; past the end the final pose is held."""
        cum = np.concatenate([[0.0], np.cumsum([p.length for p in self.controls])])
        out = []
        for s in distances:
            seg = int(np.searchsorted(cum, s, side="right")) - 1
            if seg >= len(self.controls):
                out.append(self.poses[-1, :2])
                continue
            seg = max(seg, 0)
            prim = self.controls[seg]
            frac = (s - cum[seg]) / prim.length if prim.length > 0 else 0.0
            if frac <= 0:
                out.append(self.poses[seg, :2])
            else:
                out.append(prim.apply(tuple(self.poses[seg]), prim.duration * frac)[:2])
        return np.array(out, dtype=float).reshape(-1, 2)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "y", "theta", "g"])
            for (x, y, th), g in zip(self.poses, self.g):
                w.writerow([repr(float(x)), repr(float(y)), repr(float(th)), repr(float(g))])


def footprint_blocked(grid: Grid2D, radius: float) -> np.ndarray:
    """Cells where a disk of `radius` centred anywhere in the cell could touch an occupied cell.

    A cell is blocked when the distance from its centre to some occupied
    square is below radius + half the cell diagonal, which makes a lookup of
    the pose's cell an exact (conservative) disk collision test.
    """
    res = grid.resolution
    occ = grid.states == CellState.OCCUPIED
    reach = radius + res * math.sqrt(2.0) / 2.0
    k = int(math.ceil(reach / res)) + 1
    nx, ny = occ.shape
    padded = np.pad(occ, k)
    out = np.zeros_like(occ)
    for di in range(-k, k + 1):
        dx = max(abs(di) * res - res / 2.0, 0.0)
        for dj in range(-k, k + 1):
            dy = max(abs(dj) * res - res / 2.0, 0.0)
            if dx * dx + dy * dy < reach * reach:
                out |= padded[k + di:k + di + nx, k + dj:k + dj + ny]
    return out


def holonomic_heuristic(grid: Grid2D, goal_cell) -> np.ndarray:
    """8-connected Dijkstra distance (m) from the goal over non-occupied cells."""
    gi, gj = (int(v) for v in goal_cell)
    nx, ny = grid.shape
    if not (0 <= gi < nx and 0 <= gj < ny):
        raise InvalidGoal("goal outside grid")
    passable = grid.states != CellState.OCCUPIED
    if not passable[gi, gj]:
        raise InvalidGoal("goal cell is occupied")
    res = grid.resolution
    idx = np.arange(nx * ny).reshape(nx, ny)
    rows, cols, wts = [], [], []
    for di, dj, w in ((1, 0, res), (0, 1, res), (1, 1, res * math.sqrt(2.0)), (1, -1, res * math.sqrt(2.0))):
        # a: cells whose (di, dj) neighbour exists; b: those neighbours
        a = (slice(max(0, -di), nx - max(0, di)), slice(max(0, -dj), ny - max(0, dj)))
        b = (slice(a[0].start + di, a[0].stop + di), slice(a[1].start + dj, a[1].stop + dj))
        ok = passable[a] & passable[b]
        rows.append(idx[a][ok])
        cols.append(idx[b][ok])
        wts.append(np.full(int(ok.sum()), w))
    r = np.concatenate(rows)
    c = np.concatenate(cols)
    w = np.concatenate(wts)
    graph = coo_matrix((w, (r, c)), shape=(nx * ny, nx * ny)).tocsr()
    dist = dijkstra(graph, directed=False, indices=gi * ny + gj)
    return dist.reshape(nx, ny)


def _theta_bin(theta: float, bins: int) -> int:
    return int(math.floor((wrap_angle(theta) + math.pi) / (2.0 * math.pi) * bins)) % bins


def hybrid_astar(grid: Grid2D, start, goal, prims: PrimitiveSet,
                 config: PlannerConfig | None = None) -> PlanResult:
    """Plan from start (x, y, theta) to within tolerance of goal (x, y).

    Occupied cells are obstacles for the footprint disk, unknown cells are
    traversable at `unknown_penalty` times their length, anything outside the
    grid is blocked. f = g + max(euclidean, holonomic); ties break on lower h,
    then insertion order.
    """
    cfg = config or PlannerConfig()
    res = grid.resolution
    x0, y0 = grid.origin
    nx, ny = grid.shape
    tol = cfg.goal_tolerance if cfg.goal_tolerance is not None else 1.5 * res
    gx, gy = float(goal[0]), float(goal[1])
    gi, gj = (int(v) for v in grid.cell_of(gx, gy))
    if not (0 <= gi < nx and 0 <= gj < ny):
        raise InvalidGoal("goal outside grid")
    if grid.states[gi, gj] == CellState.OCCUPIED:
        raise InvalidGoal("goal cell is occupied")
    blocked = footprint_blocked(grid, cfg.footprint_radius)
    unknown = grid.states == CellState.UNKNOWN
    sx, sy, sth = (float(v) for v in start)
    si, sj = (int(v) for v in grid.cell_of(sx, sy))
    if not (0 <= si < nx and 0 <= sj < ny) or blocked[si, sj]:
        raise InvalidStart("start pose is in collision")
    hol = holonomic_heuristic(grid, (gi, gj))
    if not np.isfinite(hol[si, sj]):
        raise NoPath("goal unreachable even without kinematic constraints")
    hol_l = hol.tolist()
    blocked_l = blocked.tolist()
    unknown_l = unknown.tolist()
    pen = cfg.unknown_penalty

    # local-frame samples along each primitive at <= res/2 spacing
    expansions = []
    for prim in prims:
        n = max(1, math.ceil(prim.length / (res / 2.0)))
        pts = [prim.apply((0.0, 0.0, 0.0), prim.duration * k / n) for k in range(1, n + 1)]
        expansions.append((prim, pts, prim.length / n))

    def heuristic(x, y, i, j):
        e = math.hypot(gx - x, gy - y)
        hv = hol_l[i][j]
        return e if e > hv else hv

    bins = cfg.theta_bins
    nodes = [(sx, sy, sth, 0.0, -1, None)]
    h0 = heuristic(sx, sy, si, sj)
    counter = 0
    heap = [(h0, h0, counter, 0)]
    best_g = {(si, sj, _theta_bin(sth, bins)): 0.0}
    closed = set()
    n_exp = 0
    while heap:
        _, h, _, idx = heapq.heappop(heap)
        x, y, th, g, _, _ = nodes[idx]
        key = (math.floor((x - x0) / res), math.floor((y - y0) / res), _theta_bin(th, bins))
        if key in closed:
            continue
        closed.add(key)
        if math.hypot(x - gx, y - gy) <= tol:
            return _backtrack(nodes, idx, n_exp)
        n_exp += 1
        if n_exp > cfg.max_expansions:
            raise NoPath(f"expansion limit {cfg.max_expansions} reached")
        c, s = math.cos(th), math.sin(th)
        for prim, pts, piece in expansions:
            cost = 0.0
            ok = True
            for dx, dy, _ in pts:
                px = x + c * dx - s * dy
                py = y + s * dx + c * dy
                i = math.floor((px - x0) / res)
                j = math.floor((py - y0) / res)
                if i < 0 or j < 0 or i >= nx or j >= ny or blocked_l[i][j]:
                    ok = False
                    break
                cost += piece * pen if unknown_l[i][j] else piece
            if not ok:
                continue
            ex, ey, eth = prim.apply((x, y, th))
            i = math.floor((ex - x0) / res)
            j = math.floor((ey - y0) / res)
            nkey = (i, j, _theta_bin(eth, bins))
            if nkey in closed:
                continue
            ng = g + cost
            if ng >= best_g.get(nkey, math.inf):
                continue
            best_g[nkey] = ng
            nh = heuristic(ex, ey, i, j)
            if not math.isfinite(nh):
                continue
            nodes.append((ex, ey, eth, ng, idx, prim))
            counter += 1
            heapq.heappush(heap, (ng + nh, nh, counter, len(nodes) - 1))
    raise NoPath("open set exhausted")


def _backtrack(nodes, idx, n_exp) -> PlanResult:
    poses, gs, ctrl = [], [], []
    while idx >= 0:
        x, y, th, g, parent, prim = nodes[idx]
        poses.append((x, y, th))
        gs.append(g)
        if prim is not None:
            ctrl.append(prim)
        idx = parent
    return PlanResult(np.array(poses[::-1]), np.array(gs[::-1]), ctrl[::-1], n_exp)
