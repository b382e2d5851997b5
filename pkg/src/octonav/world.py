"""Deterministic 2D world: obstacles, planar LiDAR, reference routes and a teacher driver."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import FormatError, InvalidGeometry, InvalidScenario, InvalidStart, NoPath, InvalidGoal
from .grid import CellState, Grid2D
from .kinematics import ControlSignal, EgoState, KinematicParams, body_to_wheel, step_exact
from .planners import PlannerConfig, hybrid_astar, motion_primitives


# ---------------------------------------------------------------- geometry --
@dataclass(frozen=True)
class Circle:
    cx: float
    cy: float
    r: float

    def moved(self, dx, dy):
        return Circle(self.cx + dx, self.cy + dy, self.r)

    def extent(self):
        return (self.cx - self.r, self.cy - self.r, self.cx + self.r, self.cy + self.r)

    def distance(self, x, y):
        """Distance from points to the shape (0 inside)."""
        return np.maximum(np.hypot(np.asarray(x) - self.cx, np.asarray(y) - self.cy) - self.r, 0.0)


@dataclass(frozen=True)
class Rect:
    xmin: float
    ymin: float
    xmax: float
    ymax: float

    def moved(self, dx, dy):
        return Rect(self.xmin + dx, self.ymin + dy, self.xmax + dx, self.ymax + dy)

    def extent(self):
        return (self.xmin, self.ymin, self.xmax, self.ymax)

    def distance(self, x, y):
        dx = np.maximum(np.maximum(self.xmin - np.asarray(x), 0.0), np.asarray(x) - self.xmax)
        dy = np.maximum(np.maximum(self.ymin - np.asarray(y), 0.0), np.asarray(y) - self.ymax)
        return np.hypot(dx, dy)


@dataclass(frozen=True)
class DynamicObstacle:
    shape: Circle | Rect
    vx: float
    vy: float


@dataclass(frozen=True)
class World:
    bounds: tuple
    static_obstacles: tuple = ()
    dynamic_obstacles: tuple = ()
    rng_seed: int = 0
    time: float = 0.0

    def __post_init__(self):
        xmin, ymin, xmax, ymax = self.bounds
        if not (xmin < xmax and ymin < ymax):
            raise InvalidGeometry("empty world bounds")
        for shape in self.shapes():
            a, b, c, d = shape.extent()
            if a < xmin or b < ymin or c > xmax or d > ymax:
                raise InvalidGeometry(f"obstacle {shape} outside bounds")

    def shapes(self):
        return list(self.static_obstacles) + [d.shape for d in self.dynamic_obstacles]

    def clearance(self, x, y):
        """Distance from points to the nearest obstacle or boundary wall."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        xmin, ymin, xmax, ymax = self.bounds
        d = np.minimum(np.minimum(x - xmin, xmax - x), np.minimum(y - ymin, ymax - y))
        for shape in self.shapes():
            d = np.minimum(d, shape.distance(x, y))
        return d

    def collides(self, x, y, radius) -> bool:
        return bool(np.any(self.clearance(x, y) < radius))


def step_world(world: World, dt: float) -> World:
    """Advance dynamic obstacles at constant velocity, reflecting off the bounds."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    xmin, ymin, xmax, ymax = world.bounds
    moved = []
    for ob in world.dynamic_obstacles:
        s = ob.shape.moved(ob.vx * dt, ob.vy * dt)
        vx, vy = ob.vx, ob.vy
        a, b, c, d = s.extent()
        dx = dy = 0.0
        if a < xmin:
            dx, vx = 2 * (xmin - a), -vx
        elif c > xmax:
            dx, vx = -2 * (c - xmax), -vx
        if b < ymin:
            dy, vy = 2 * (ymin - b), -vy
        elif d > ymax:
            dy, vy = -2 * (d - ymax), -vy
        if dx or dy:
            s = s.moved(dx, dy)
        moved.append(DynamicObstacle(s, vx, vy))
    return replace(world, dynamic_obstacles=tuple(moved), time=world.time + dt)


def lidar_scan(world: World, pose, n_beams: int = 360, max_range: float = 20.0):
    """Planar scan: (endpoints (n, 3) with z = 0, hit flags (n,))."""
    X, Y, th = (float(v) for v in pose)
    ang = th + 2.0 * math.pi * np.arange(n_beams) / n_beams
    dx, dy = np.cos(ang), np.sin(ang)
    best = np.full(n_beams, float(max_range))
    hit = np.zeros(n_beams, dtype=bool)

    def offer(t):
        nonlocal best, hit
        better = (t >= 0) & (t <= max_range) & (t < best)
        best = np.where(better, t, best)
        hit |= better

    with np.errstate(divide="ignore", invalid="ignore"):
        xmin, ymin, xmax, ymax = world.bounds
        tx = np.where(dx > 0, (xmax - X) / dx, np.where(dx < 0, (xmin - X) / dx, np.inf))
        ty = np.where(dy > 0, (ymax - Y) / dy, np.where(dy < 0, (ymin - Y) / dy, np.inf))
        offer(np.minimum(tx, ty))
        for shape in world.shapes():
            if isinstance(shape, Circle):
                ox, oy = X - shape.cx, Y - shape.cy
                b = dx * ox + dy * oy
                c = ox * ox + oy * oy - shape.r * shape.r
                disc = b * b - c
                if c <= 0:
                    offer(np.zeros(n_beams))
                    continue
                t = np.where(disc >= 0, -b - np.sqrt(np.maximum(disc, 0.0)), np.inf)
                offer(t)
            else:
                t1x, t2x = (shape.xmin - X) / dx, (shape.xmax - X) / dx
                t1y, t2y = (shape.ymin - Y) / dy, (shape.ymax - Y) / dy
                inside_x = (X >= shape.xmin) & (X <= shape.xmax)
                inside_y = (Y >= shape.ymin) & (Y <= shape.ymax)
                lo_x = np.where(dx == 0, np.where(inside_x, -np.inf, np.inf), np.minimum(t1x, t2x))
                hi_x = np.where(dx == 0, np.where(inside_x, np.inf, -np.inf), np.maximum(t1x, t2x))
                lo_y = np.where(dy == 0, np.where(inside_y, -np.inf, np.inf), np.minimum(t1y, t2y))
                hi_y = np.where(dy == 0, np.where(inside_y, np.inf, -np.inf), np.maximum(t1y, t2y))
                t_in = np.maximum(lo_x, lo_y)
                t_out = np.minimum(hi_x, hi_y)
                t = np.where(t_in <= t_out, np.maximum(t_in, 0.0), np.inf)
                offer(np.where(t_out >= 0, t, np.inf))
    pts = np.zeros((n_beams, 3))
    pts[:, 0] = X + best * dx
    pts[:, 1] = Y + best * dy
    return pts, hit


def rasterize(world: World, origin, shape, resolution: float) -> Grid2D:
    """Privileged ground-truth grid: cells whose centre is within half a cell of an obstacle."""
    nx, ny = shape
    xs = origin[0] + (np.arange(nx) + 0.5) * resolution
    ys = origin[1] + (np.arange(ny) + 0.5) * resolution
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    occ = world.clearance(gx, gy) < resolution * math.sqrt(2.0) / 2.0
    states = np.where(occ, CellState.OCCUPIED, CellState.FREE).astype(np.int8)
    return Grid2D((float(origin[0]), float(origin[1])), resolution, states)


# ------------------------------------------------------------------ routes --
@dataclass
class ReferencePath:
    points: np.ndarray
    spacing: float
    kind: str = "waypoints"
    closed: bool = False

    def __len__(self):
        return len(self.points)

    def arc_lengths(self) -> np.ndarray:
        seg = np.hypot(*np.diff(self.points, axis=0).T)
        return np.concatenate([[0.0], np.cumsum(seg)])

    def point_at(self, s: float) -> np.ndarray:
        """Point at arc length s (clamped, or wrapped for closed loops)."""
        pts = self.points
        if self.closed:
            pts = np.vstack([pts, pts[:1]])
        seg = np.hypot(*np.diff(pts, axis=0).T)
        cum = np.concatenate([[0.0], np.cumsum(seg)])
        total = cum[-1]
        s = s % total if self.closed else min(max(s, 0.0), total)
        k = min(int(np.searchsorted(cum, s, side="right")) - 1, len(seg) - 1)
        f = (s - cum[k]) / seg[k] if seg[k] > 0 else 0.0
        return pts[k] + f * (pts[k + 1] - pts[k])


def _compose(start, heading, segments, spacing, include_end=True):
    """Sample a chain of ('line', L) / ('arc', radius, sweep) pieces at even arc length."""
    total = sum(seg[1] if seg[0] == "line" else abs(seg[1] * seg[2]) for seg in segments)
    n = max(1, round(total / spacing))
    step = total / n
    samples = np.arange(n + 1 if include_end else n) * step
    out = []
    x, y, h = float(start[0]), float(start[1]), float(heading)
    s0 = 0.0
    k = 0
    for seg in segments:
        length = seg[1] if seg[0] == "line" else abs(seg[1] * seg[2])
        kappa = 0.0 if seg[0] == "line" else math.copysign(1.0 / seg[1], seg[2])
        last = seg is segments[-1]
        while k < len(samples) and (samples[k] <= s0 + length + 1e-12 if last else samples[k] < s0 + length):
            u = samples[k] - s0
            if kappa == 0.0:
                out.append((x + u * math.cos(h), y + u * math.sin(h)))
            else:
                r = 1.0 / kappa
                out.append((x + r * (math.sin(h + kappa * u) - math.sin(h)),
                            y - r * (math.cos(h + kappa * u) - math.cos(h))))
            k += 1
        if kappa == 0.0:
            x, y = x + length * math.cos(h), y + length * math.sin(h)
        else:
            r = 1.0 / kappa
            x, y = x + r * (math.sin(h + kappa * length) - math.sin(h)), y - r * (math.cos(h + kappa * length) - math.cos(h))
            h += kappa * length
        s0 += length
    return np.array(out), step


def make_route(kind: str, spacing: float = 0.2, **p) -> ReferencePath:
    """Evenly spaced reference route.

    line:      start, heading, length
    circle:    center, radius, start_angle, turns (counter-clockwise)
    s_curve:   start, heading, radius1, radius2, sweep, lead (straight before/after)
    waypoints: points (polyline resampled at `spacing`)
    """
    if not spacing > 0:
        raise InvalidGeometry("spacing must be positive")
    start = p.get("start", (0.0, 0.0))
    heading = p.get("heading", 0.0)
    if kind == "line":
        length = p.get("length", 10.0)
        if not length > 0:
            raise InvalidGeometry("line length must be positive")
        pts, step = _compose(start, heading, [("line", length)], spacing)
        return ReferencePath(pts, step, "line")
    if kind == "circle":
        r = p.get("radius", 5.0)
        if not r > 0:
            raise InvalidGeometry("circle radius must be positive")
        cx, cy = p.get("center", (0.0, 0.0))
        a0 = p.get("start_angle", -math.pi / 2)
        turns = p.get("turns", 1.0)
        n = max(3, round(turns * 2 * math.pi * r / spacing))
        ang = a0 + turns * 2 * math.pi * np.arange(n) / n
        pts = np.column_stack([cx + r * np.cos(ang), cy + r * np.sin(ang)])
        return ReferencePath(pts, turns * 2 * math.pi * r / n, "circle", closed=turns == 1.0)
    if kind == "s_curve":
        r1 = p.get("radius1", 3.0)
        r2 = p.get("radius2", 3.0)
        sweep = p.get("sweep", math.pi / 2)
        lead = p.get("lead", 0.0)
        if not (r1 > 0 and r2 > 0 and 0 < sweep <= math.pi and lead >= 0):
            raise InvalidGeometry("s_curve needs positive radii, 0 < sweep <= pi, lead >= 0")
        segs = [("arc", r1, sweep), ("arc", r2, -sweep)]
        if lead > 0:
            segs = [("line", lead)] + segs + [("line", lead)]
        pts, step = _compose(start, heading, segs, spacing)
        return ReferencePath(pts, step, "s_curve")
    if kind == "waypoints":
        wp = np.asarray(p.get("points", ()), dtype=float)
        if wp.ndim != 2 or len(wp) < 2:
            raise InvalidGeometry("waypoints need at least two points")
        seg = np.hypot(*np.diff(wp, axis=0).T)
        if np.any(seg <= 0):
            raise InvalidGeometry("repeated waypoint")
        cum = np.concatenate([[0.0], np.cumsum(seg)])
        n = max(1, round(cum[-1] / spacing))
        s = np.linspace(0.0, cum[-1], n + 1)
        pts = np.column_stack([np.interp(s, cum, wp[:, 0]), np.interp(s, cum, wp[:, 1])])
        return ReferencePath(pts, cum[-1] / n, "waypoints")
    raise InvalidGeometry(f"unknown route kind {kind!r}")


def discrete_curvature_signs(points: np.ndarray, eps: float = 1e-9) -> np.ndarray:
    d = np.diff(points, axis=0)
    cross = d[:-1, 0] * d[1:, 1] - d[:-1, 1] * d[1:, 0]
    return np.sign(np.where(np.abs(cross) < eps, 0.0, cross))


# --------------------------------------------------------------- drive logs --
@dataclass
class TickRecord:
    tick: int
    t: float
    state: EgoState
    wheels: tuple
    endpoints: np.ndarray
    hits: np.ndarray


@dataclass
class DriveLog:
    run_id: int
    route_id: str
    route: ReferencePath
    dt: float
    speed: float
    records: list = field(default_factory=list)
    aborted: bool = False
    footprint_radius: float = 0.4

    def __len__(self):
        return len(self.records)

    def poses(self) -> np.ndarray:
        return np.array([r.state.pose for r in self.records]).reshape(-1, 3)

    def to_jsonl(self) -> str:
        head = {
            "kind": "header", "run_id": self.run_id, "route_id": self.route_id, "dt": self.dt,
            "speed": self.speed, "aborted": self.aborted, "footprint_radius": self.footprint_radius,
            "route": {"kind": self.route.kind, "spacing": self.route.spacing, "closed": self.route.closed,
                      "points": self.route.points.tolist()},
        }
        lines = [json.dumps(head)]
        for r in self.records:
            s = r.state
            lines.append(json.dumps({
                "tick": r.tick, "t": r.t, "route_id": self.route_id,
                "pose": [s.X, s.Y, s.theta], "vel": [s.v_x, s.v_y, s.omega_z],
                "wheels": list(r.wheels),
                "endpoints": r.endpoints[:, :2].tolist(),
                "hits": "".join("1" if h else "0" for h in r.hits),
            }))
        return "\n".join(lines) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.to_jsonl())

    @classmethod
    def from_jsonl(cls, text: str) -> "DriveLog":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        try:
            head = json.loads(lines[0])
            if head.get("kind") != "header":
                raise FormatError("first record must be the header")
            rt = head["route"]
            route = ReferencePath(np.array(rt["points"], dtype=float).reshape(-1, 2), rt["spacing"],
                                  rt["kind"], rt["closed"])
            log = cls(head["run_id"], head["route_id"], route, head["dt"], head["speed"],
                      aborted=head["aborted"], footprint_radius=head["footprint_radius"])
            for ln in lines[1:]:
                rec = json.loads(ln)
                ep = np.array(rec["endpoints"], dtype=float).reshape(-1, 2)
                ep = np.column_stack([ep, np.zeros(len(ep))])
                state = EgoState(*rec["pose"], *rec["vel"])
                hits = np.array([c == "1" for c in rec["hits"]], dtype=bool)
                log.records.append(TickRecord(rec["tick"], rec["t"], state, tuple(rec["wheels"]), ep, hits))
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            if isinstance(exc, FormatError):
                raise
            raise FormatError(f"malformed drive log: {exc}") from exc
        return log

    @classmethod
    def load(cls, path) -> "DriveLog":
        return cls.from_jsonl(Path(path).read_text())


# ----------------------------------------------------------------- teacher --
@dataclass(frozen=True)
class TeacherConfig:
    speed: float = 1.0
    lookahead: float = 0.8
    replan_every: int = 5
    plan_horizon: float = 5.0
    footprint_radius: float = 0.4
    margin: float = 0.25
    grid_resolution: float = 0.2
    local_size: float = 14.0
    n_beams: int = 360
    max_range: float = 20.0
    n_curvatures: int = 5
    primitive_duration: float = 0.4


class Teacher:
    """Pure pursuit on the route; replans with hybrid A* around the first blocked stretch."""

    def __init__(self, route: ReferencePath, params: KinematicParams, cfg: TeacherConfig):
        self.route = route
        self.params = params
        self.cfg = cfg
        self.s_route = route.arc_lengths()
        self.prims = motion_primitives(params, cfg.speed, cfg.n_curvatures, cfg.primitive_duration)
        self.path = None
        self.progress = 0

    def _nearest(self, x, y) -> int:
        # search forward from the previous projection so loops don't jump back
        n = len(self.route)
        window = np.arange(self.progress, self.progress + max(20, int(3.0 / self.route.spacing)))
        idx = window % n if self.route.closed else np.clip(window, 0, n - 1)
        d = np.hypot(self.route.points[idx, 0] - x, self.route.points[idx, 1] - y)
        k = int(np.argmin(d))
        self.progress = int(window[k])
        return int(idx[k])

    def _route_ahead(self, k0: int, length: float) -> np.ndarray:
        n = len(self.route)
        m = int(math.ceil(length / self.route.spacing)) + 1
        idx = np.arange(k0, k0 + m)
        idx = idx % n if self.route.closed else idx[idx < n]
        return self.route.points[idx]

    def plan(self, world: World, state: EgoState):
        cfg = self.cfg
        k0 = self._nearest(state.X, state.Y)
        ahead = self._route_ahead(k0, cfg.local_size / 2.0 - 1.0)
        need = cfg.footprint_radius + cfg.margin
        clear = world.clearance(ahead[:, 0], ahead[:, 1]) >= need
        horizon_pts = int(cfg.plan_horizon / self.route.spacing)
        if clear[:horizon_pts].all():
            self.path = self._route_ahead(k0, cfg.local_size)
            return
        # goals: clear route points past the first blocked stretch, preferring
        # ones that start a clear run of at least a metre
        first_bad = int(np.argmin(clear))
        run = max(1, int(round(1.0 / self.route.spacing)))
        cands = [k for k in range(first_bad + 1, len(ahead)) if clear[k]]
        good = [k for k in cands if clear[k:k + run].all() and k + run <= len(ahead)]
        order = good + [k for k in cands if k not in good]
        if not order:
            if self.path is None:
                self.path = self._route_ahead(k0, cfg.local_size)
            return
        half = cfg.local_size / 2.0
        res = cfg.grid_resolution
        origin = (math.floor((state.X - half) / res) * res, math.floor((state.Y - half) / res) * res)
        n = int(round(cfg.local_size / res))
        grid = rasterize(world, origin, (n, n), res)
        pc = PlannerConfig(footprint_radius=need, goal_tolerance=0.4, max_expansions=20_000)
        for goal_k in order[:3]:
            try:
                plan = hybrid_astar(grid, state.pose, ahead[goal_k], self.prims, pc)
            except (NoPath, InvalidStart, InvalidGoal):
                continue
            dense = plan.dense(0.1)[:, :2]
            goal_idx = (k0 + goal_k) % len(self.route) if self.route.closed else k0 + goal_k
            self.path = np.vstack([dense, self._route_ahead(goal_idx, cfg.local_size)])
            return
        if self.path is None:
            self.path = self._route_ahead(k0, cfg.local_size)

    def control(self, state: EgoState) -> ControlSignal:
        cfg = self.cfg
        path = self.path
        d = np.hypot(path[:, 0] - state.X, path[:, 1] - state.Y)
        i = int(np.argmin(d))
        seg = np.hypot(*np.diff(path[i:], axis=0).T)
        cum = np.concatenate([[0.0], np.cumsum(seg)])
        j = i + min(int(np.searchsorted(cum, cfg.lookahead)), len(cum) - 1)
        tx, ty = path[j]
        c, s = math.cos(state.theta), math.sin(state.theta)
        lx = c * (tx - state.X) + s * (ty - state.Y)
        ly = -s * (tx - state.X) + c * (ty - state.Y)
        dist2 = lx * lx + ly * ly
        kappa = 2.0 * ly / dist2 if dist2 > 1e-12 else 0.0
        w_max = self.params.max_yaw_rate(cfg.speed)
        w = min(max(cfg.speed * kappa, -w_max), w_max)
        return ControlSignal(cfg.speed, w)

    def finished(self, state: EgoState) -> bool:
        if self.route.closed:
            return self.progress >= len(self.route) - 1
        n = len(self.route)
        if self.progress >= n - 2:
            return True
        end = self.route.points[-1]
        near_end = self.progress >= n - 1 - math.ceil(self.cfg.lookahead / self.route.spacing)
        return near_end and math.hypot(state.X - end[0], state.Y - end[1]) < self.cfg.lookahead / 2


def initial_state(route: ReferencePath) -> EgoState:
    p0, p1 = route.points[0], route.points[1]
    return EgoState(float(p0[0]), float(p0[1]), math.atan2(p1[1] - p0[1], p1[0] - p0[0]))


def collect_run(world: World, route: ReferencePath, params: KinematicParams, dt: float = 0.1,
                ticks: int = 1000, cfg: TeacherConfig | None = None, run_id: int = 0,
                route_id: str = "route") -> DriveLog:
    """Drive the route with the teacher, logging pose, wheel speeds and scan every tick."""
    cfg = cfg or TeacherConfig()
    log = DriveLog(run_id, route_id, route, dt, cfg.speed, footprint_radius=cfg.footprint_radius)
    state = initial_state(route)
    if world.collides(state.X, state.Y, cfg.footprint_radius):
        raise InvalidScenario("route start is in collision")
    teacher = Teacher(route, params, cfg)
    for tick in range(ticks):
        if tick % cfg.replan_every == 0 or teacher.path is None:
            teacher.plan(world, state)
        u = teacher.control(state)
        wheels = body_to_wheel(u, params)
        pts, hits = lidar_scan(world, state.pose, cfg.n_beams, cfg.max_range)
        state = EgoState(state.X, state.Y, state.theta, u.v_x, 0.0, u.omega_z)
        log.records.append(TickRecord(tick, round(tick * dt, 9), state, wheels, pts, hits))
        state = step_exact(state, u, dt)
        world = step_world(world, dt)
        if world.collides(state.X, state.Y, cfg.footprint_radius):
            log.aborted = True
            break
        if teacher.finished(state):
            break
    return log


# --------------------------------------------------------------- scenarios --
ROUTE_KINDS = ("line", "s_curve", "circle")


def _route_for(kind: str, rng: np.random.Generator, spacing: float) -> ReferencePath:
    if kind == "line":
        return make_route("line", spacing, start=(0.0, 0.0), heading=0.0, length=float(rng.uniform(26.0, 32.0)))
    if kind == "s_curve":
        r = float(rng.uniform(6.0, 9.0))
        return make_route("s_curve", spacing, start=(0.0, 0.0), heading=0.0, radius1=r, radius2=r,
                          sweep=float(rng.uniform(0.6, 1.0)), lead=4.0)
    if kind == "circle":
        r = float(rng.uniform(6.0, 8.0))
        return make_route("circle", spacing, center=(0.0, r), radius=r, start_angle=-math.pi / 2, turns=1.0)
    raise InvalidGeometry(f"unknown route kind {kind!r}")


def random_scenario(kind: str, seed: int, n_blocking: tuple = (2, 4), n_clutter: tuple = (4, 8),
                    n_dynamic: int = 1, spacing: float = 0.2, start_clear: float = 4.0) -> tuple[World, ReferencePath]:
    """Route of the given kind with obstacles on it, clutter beside it and slow movers."""
    rng = np.random.default_rng(seed)
    route = _route_for(kind, rng, spacing)
    pts = route.points
    cum = route.arc_lengths()
    lo = pts.min(axis=0) - 6.0
    hi = pts.max(axis=0) + 6.0
    bounds = (float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1]))
    tang = np.gradient(pts, axis=0)
    tang /= np.linalg.norm(tang, axis=1, keepdims=True)
    normal = np.column_stack([-tang[:, 1], tang[:, 0]])
    usable = np.nonzero((cum > start_clear) & (cum < cum[-1] - 3.0))[0]
    statics = []

    def fits(shape, keep_start=True):
        a, b, c, d = shape.extent()
        if a < bounds[0] or b < bounds[1] or c > bounds[2] or d > bounds[3]:
            return False
        return not (keep_start and shape.distance(pts[0, 0], pts[0, 1]) < start_clear - 1.0)

    def shape_at(p, size):
        if rng.random() < 0.5:
            return Circle(float(p[0]), float(p[1]), size)
        hw, hh = size * rng.uniform(0.7, 1.3), size * rng.uniform(0.7, 1.3)
        return Rect(float(p[0] - hw), float(p[1] - hh), float(p[0] + hw), float(p[1] + hh))

    # blocking obstacles spread along the route, offset slightly to either side
    k = int(rng.integers(n_blocking[0], n_blocking[1] + 1))
    k = min(k, int((cum[usable[-1]] - cum[usable[0]]) // 6.0)) if usable.size else 0
    if k:
        slots = np.array_split(usable, k)
        for slot in slots:
            idx = int(rng.choice(slot[len(slot) // 4: max(len(slot) // 4 + 1, 3 * len(slot) // 4)]))
            p = pts[idx] + normal[idx] * rng.uniform(-0.5, 0.5)
            s = shape_at(p, float(rng.uniform(0.4, 0.8)))
            if fits(s):
                statics.append(s)
    # clutter beside the route
    for _ in range(int(rng.integers(n_clutter[0], n_clutter[1] + 1))):
        idx = int(rng.choice(usable))
        side = rng.choice([-1.0, 1.0])
        p = pts[idx] + normal[idx] * side * rng.uniform(2.2, 4.5)
        s = shape_at(p, float(rng.uniform(0.3, 0.7)))
        if fits(s) and np.min(s.distance(pts[:, 0], pts[:, 1])) > 1.4:
            statics.append(s)
    dynamic = []
    for _ in range(n_dynamic):
        idx = int(rng.choice(usable))
        side = rng.choice([-1.0, 1.0])
        p = pts[idx] + normal[idx] * side * rng.uniform(3.0, 5.0)
        s = Circle(float(p[0]), float(p[1]), 0.3)
        v = normal[idx] * -side * rng.uniform(0.05, 0.2)
        if fits(s) and np.min(s.distance(pts[:, 0], pts[:, 1])) > 1.4:
            dynamic.append(DynamicObstacle(s, float(v[0]), float(v[1])))
    return World(bounds, tuple(statics), tuple(dynamic), rng_seed=seed), route
