"""Self-supervised training samples from drive logs: ego windows, route points and cell labels."""
from __future__ import annotations

import logging
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (FormatError, InsufficientLog, InsufficientRuns, InvalidClass, LabelOutOfWindow)
from .kinematics import EgoState
from .octree import SensorFusionParams, create_map, ego_window
from .world import DriveLog

log = logging.getLogger(__name__)

DROP_WARNING = 0.05
SPLIT_NAMES = ("train", "val", "test")
UNASSIGNED = 255


@dataclass(frozen=True)
class GridSpec:
    width: int = 40
    height: int = 40
    resolution: float = 0.2

    def __post_init__(self):
        if self.width < 1 or self.height < 1 or not self.resolution > 0:
            raise ValueError("grid spec needs positive width, height and resolution")

    @property
    def n_classes(self) -> int:
        return self.width * self.height


def _pose(anchor):
    if isinstance(anchor, EgoState):
        return anchor.X, anchor.Y, anchor.theta
    X, Y, th = anchor
    return float(X), float(Y), float(th)


def to_ego(points, anchor) -> np.ndarray:
    """Global (x, y) points to the anchor's ego frame."""
    X, Y, th = _pose(anchor)
    p = np.asarray(points, dtype=float).reshape(-1, 2)
    c, s = math.cos(th), math.sin(th)
    dx, dy = p[:, 0] - X, p[:, 1] - Y
    return np.column_stack([c * dx + s * dy, -s * dx + c * dy])


def to_global(points, anchor) -> np.ndarray:
    X, Y, th = _pose(anchor)
    p = np.asarray(points, dtype=float).reshape(-1, 2)
    c, s = math.cos(th), math.sin(th)
    return np.column_stack([X + c * p[:, 0] - s * p[:, 1], Y + s * p[:, 0] + c * p[:, 1]])


def ego_cells(ego_xy, spec: GridSpec):
    """Vectorised (i, j, inside) for ego-frame points."""
    ego_xy = np.asarray(ego_xy, dtype=float).reshape(-1, 2)
    res = spec.resolution
    i = np.floor(ego_xy[:, 0] / res).astype(np.int64)
    j = np.floor((ego_xy[:, 1] + spec.height * res / 2.0) / res).astype(np.int64)
    inside = (i >= 0) & (i < spec.width) & (j >= 0) & (j < spec.height)
    return i, j, inside


def cell_of_position(p, anchor, spec: GridSpec) -> int:
    i, j, inside = ego_cells(to_ego(p, anchor), spec)
    if not inside[0]:
        raise LabelOutOfWindow(f"point {tuple(p)} falls outside the ego window")
    return int(i[0] * spec.height + j[0])


def cell_centers_ego(classes, spec: GridSpec) -> np.ndarray:
    c = np.asarray(classes, dtype=np.int64)
    i, j = c // spec.height, c % spec.height
    res = spec.resolution
    return np.column_stack([(i + 0.5) * res, (j + 0.5) * res - spec.height * res / 2.0])


def position_of_cell(cls: int, anchor, spec: GridSpec) -> np.ndarray:
    if not (0 <= int(cls) < spec.n_classes) or int(cls) != cls:
        raise InvalidClass(f"class {cls} outside [0, {spec.n_classes})")
    return to_global(cell_centers_ego([cls], spec), anchor)[0]


@dataclass
class SampleSequence:
    windows: np.ndarray      # (tau_i + 1, width, height) int8
    ref_window: np.ndarray   # (tau_i + tau_o + 1, 2) ego-frame metres
    labels: np.ndarray       # (tau_o,) class indices
    anchor_pose: np.ndarray  # (3,) global X, Y, theta at t
    future: np.ndarray       # (tau_o, 2) logged global positions t+1..t+tau_o
    run_id: int = 0
    tick: int = 0

    @property
    def anchor(self) -> EgoState:
        return EgoState(*(float(v) for v in self.anchor_pose))

    def future_ego(self) -> np.ndarray:
        return to_ego(self.future, self.anchor_pose)


@dataclass(frozen=True)
class MapBuilderConfig:
    resolution: float = 0.2
    z_min: float = -0.1
    z_max: float = 0.1
    margin: float = 2.0
    fusion: SensorFusionParams = field(default_factory=SensorFusionParams)


@dataclass
class BuildResult:
    samples: list
    dropped: int
    candidates: int

    def __iter__(self):
        return iter(self.samples)

    def __len__(self):
        return len(self.samples)

    def __getitem__(self, k):
        return self.samples[k]


def _log_map(drive: DriveLog, cfg: MapBuilderConfig):
    poses = drive.poses()
    ends = np.vstack([r.endpoints[:, :2] for r in drive.records] + [poses[:, :2]])
    lo = ends.min(axis=0) - cfg.margin
    hi = ends.max(axis=0) + cfg.margin
    res = cfg.resolution
    n = 1
    while n * res < float(np.max(hi - lo)):
        n *= 2
    # z = 0 sits at the centre of voxel layer n // 2
    origin = (math.floor(lo[0] / res) * res, math.floor(lo[1] / res) * res, -(n // 2) * res - res / 2.0)
    return create_map(origin, n * res, res, cfg.fusion)


def tick_windows(drive: DriveLog, spec: GridSpec, cfg: MapBuilderConfig | None = None) -> np.ndarray:
    """Ego window at every tick from a persistent map updated with all scans so far."""
    cfg = cfg or MapBuilderConfig(resolution=spec.resolution)
    octree = _log_map(drive, cfg)
    reach = math.hypot(spec.width * spec.resolution, spec.height * spec.resolution / 2.0) + spec.resolution
    out = np.zeros((len(drive), spec.width, spec.height), dtype=np.int8)
    for k, rec in enumerate(drive.records):
        s = rec.state
        octree.integrate_scan((s.X, s.Y, 0.0), rec.endpoints, rec.hits)
        grid = octree.project_2d(cfg.z_min, cfg.z_max, region=(s.X - reach, s.Y - reach, s.X + reach, s.Y + reach))
        out[k] = ego_window(grid, s.pose, spec.width, spec.height, spec.resolution).values
    return out


def reference_points(drive: DriveLog, tau_o: int, step: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Nearest route point per tick, and route points ahead of each tick at nominal speed.

    Future reference points advance along the route by speed*dt per step from
    the nearest point at the anchor, so they never depend on logged future poses.
    """
    route = drive.route
    pts = route.points
    poses = drive.poses()
    d2 = (poses[:, None, 0] - pts[None, :, 0]) ** 2 + (poses[:, None, 1] - pts[None, :, 1]) ** 2
    nearest = np.argmin(d2, axis=1)
    cum = route.arc_lengths()
    ds = drive.speed * drive.dt * step
    ahead = np.array([[route.point_at(cum[k] + m * ds) for m in range(1, tau_o + 1)] for k in nearest])
    return pts[nearest], ahead.reshape(len(poses), tau_o, 2)


def build_samples(drive: DriveLog, spec: GridSpec, tau_i: int = 4, tau_o: int = 10,
                  map_config: MapBuilderConfig | None = None, step: int = 1,
                  stride: int = 1) -> BuildResult:
    """One sample per anchor tick t with tau_i past and tau_o future sequence steps.

    A sequence step spans `step` log ticks; `stride` keeps every stride-th anchor.
    """
    if step < 1 or stride < 1:
        raise ValueError("step and stride must be >= 1")
    L = len(drive)
    need = (tau_i + tau_o) * step + 1
    if L < need:
        raise InsufficientLog(f"log has {L} ticks, need at least {need}")
    windows = tick_windows(drive, spec, map_config)
    near, ahead = reference_points(drive, tau_o, step)
    poses = drive.poses()
    samples = []
    dropped = 0
    for t in range(tau_i * step, L - tau_o * step, stride):
        anchor = poses[t]
        fut = poses[t + step:t + 1 + tau_o * step:step, :2]
        i, j, inside = ego_cells(to_ego(fut, anchor), spec)
        if not inside.all():
            dropped += 1
            continue
        past = slice(t - tau_i * step, t + 1, step)
        ref = np.vstack([near[past], ahead[t]])
        samples.append(SampleSequence(
            windows=windows[past].copy(),
            ref_window=to_ego(ref, anchor),
            labels=(i * spec.height + j).astype(np.int64),
            anchor_pose=anchor.copy(),
            future=fut.copy(),
            run_id=drive.run_id,
            tick=t,
        ))
    considered = len(samples) + dropped
    if considered and dropped / considered > DROP_WARNING:
        log.warning("run %s: dropped %d of %d samples with labels outside the window",
                    drive.run_id, dropped, considered)
    return BuildResult(samples, dropped, considered)


# ------------------------------------------------------------------ splits --
@dataclass
class Dataset:
    samples: list
    grid_spec: GridSpec
    tau_i: int
    tau_o: int
    split: np.ndarray  # per-sample 0 train / 1 val / 2 test / 255 unassigned

    def __len__(self):
        return len(self.samples)

    def subset(self, name: str) -> list:
        code = SPLIT_NAMES.index(name)
        return [s for s, c in zip(self.samples, self.split) if c == code]

    @property
    def train(self):
        return self.subset("train")

    @property
    def val(self):
        return self.subset("val")

    @property
    def test(self):
        return self.subset("test")

    def save(self, path) -> None:
        Path(path).write_bytes(to_bytes(self))

    @classmethod
    def load(cls, path) -> "Dataset":
        return from_bytes(Path(path).read_bytes())


def allocate_runs(n_runs: int, ratios) -> list[int]:
    """Largest-remainder allocation with every split receiving at least one run."""
    ratios = [float(r) for r in ratios]
    if abs(sum(ratios) - 1.0) > 1e-9 or any(r < 0 for r in ratios):
        raise ValueError("split ratios must be non-negative and sum to 1")
    k = sum(1 for r in ratios if r > 0)
    if n_runs < k:
        raise InsufficientRuns(f"{n_runs} runs cannot fill {k} splits")
    raw = [r * n_runs for r in ratios]
    counts = [math.floor(x) for x in raw]
    order = sorted(range(len(raw)), key=lambda i: (-(raw[i] - counts[i]), i))
    for i in order[: n_runs - sum(counts)]:
        counts[i] += 1
    for i, r in enumerate(ratios):
        while r > 0 and counts[i] == 0:
            donor = max(range(len(counts)), key=lambda a: (counts[a], -a))
            counts[donor] -= 1
            counts[i] += 1
    return counts


def split_dataset(samples, ratios=(0.8, 0.1, 0.1), seed: int = 0, grid_spec: GridSpec | None = None,
                  tau_i: int | None = None, tau_o: int | None = None) -> Dataset:
    """Assign whole runs to train/val/test after a seeded shuffle of run ids."""
    samples = list(samples)
    runs = sorted({s.run_id for s in samples})
    counts = allocate_runs(len(runs), ratios)
    perm = np.random.default_rng(seed).permutation(len(runs))
    assign = {}
    pos = 0
    for code, c in enumerate(counts):
        for r in perm[pos:pos + c]:
            assign[runs[int(r)]] = code
        pos += c
    split = np.array([assign[s.run_id] for s in samples], dtype=np.uint8)
    if samples:
        tau_i = samples[0].windows.shape[0] - 1 if tau_i is None else tau_i
        tau_o = len(samples[0].labels) if tau_o is None else tau_o
        if grid_spec is None:
            w, h = samples[0].windows.shape[1:]
            grid_spec = GridSpec(w, h)
    return Dataset(samples, grid_spec or GridSpec(), tau_i or 0, tau_o or 0, split)


# --------------------------------------------------------------- container --
_MAGIC = b"OPD1"
_HEADER = struct.Struct("<4sBIIdIII")  # magic, version, width, height, res, tau_i, tau_o, count
_VERSION = 1


def _record_dtype(spec: GridSpec, tau_i: int, tau_o: int) -> np.dtype:
    return np.dtype([
        ("anchor", "<f8", (3,)),
        ("windows", "i1", (tau_i + 1, spec.width, spec.height)),
        ("ref", "<f8", (tau_i + tau_o + 1, 2)),
        ("labels", "<u4", (tau_o,)),
        ("future", "<f8", (tau_o, 2)),
        ("run_id", "<u4"),
        ("tick", "<u4"),
        ("split", "u1"),
    ])


def to_bytes(ds: Dataset) -> bytes:
    spec = ds.grid_spec
    head = _HEADER.pack(_MAGIC, _VERSION, spec.width, spec.height, spec.resolution, ds.tau_i, ds.tau_o, len(ds))
    rec = np.zeros(len(ds), dtype=_record_dtype(spec, ds.tau_i, ds.tau_o))
    for k, s in enumerate(ds.samples):
        rec[k] = (s.anchor_pose, s.windows, s.ref_window, s.labels, s.future, s.run_id, s.tick, ds.split[k])
    return head + rec.tobytes()


def from_bytes(data: bytes) -> Dataset:
    if len(data) < _HEADER.size:
        raise FormatError("dataset container truncated")
    magic, version, w, h, res, tau_i, tau_o, count = _HEADER.unpack_from(data)
    if magic != _MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    if version != _VERSION:
        raise FormatError(f"unsupported dataset version {version}")
    try:
        spec = GridSpec(w, h, res)
    except ValueError as exc:
        raise FormatError(str(exc)) from exc
    dt = _record_dtype(spec, tau_i, tau_o)
    if len(data) != _HEADER.size + count * dt.itemsize:
        raise FormatError("dataset container size does not match its header")
    rec = np.frombuffer(data, dtype=dt, offset=_HEADER.size, count=count)
    if count and int(rec["labels"].max()) >= spec.n_classes:
        raise FormatError("label outside the class range")
    samples = [
        SampleSequence(r["windows"].copy(), r["ref"].astype(float), r["labels"].astype(np.int64),
                       r["anchor"].astype(float), r["future"].astype(float), int(r["run_id"]), int(r["tick"]))
        for r in rec
    ]
    return Dataset(samples, spec, tau_i, tau_o, rec["split"].astype(np.uint8).copy())
