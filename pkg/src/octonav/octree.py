"""Probabilistic octree occupancy map.

The tree is stored as a linear octree: every leaf is addressed by the Morton
code of its finest-level voxel index, so the code's 3-bit groups spell the
child path from the root. Sorted codes enumerate leaves in preorder, which is
what the binary format and the coarsening walk rely on.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError, InvalidGeometry, OutOfBounds
from .grid import CellState, Grid2D

MAX_DEPTH = 16
MAGIC = b"OCT1"
_HEADER = struct.Struct("<4s" + "d" * 10)


def logit(p: float) -> float:
    return math.log(p / (1.0 - p))


@dataclass(frozen=True)
class SensorFusionParams:
    p_hit: float = 0.7
    p_miss: float = 0.4
    l_min: float = logit(0.12)
    l_max: float = logit(0.97)
    occ_threshold: float = 0.5
    max_range: float = 20.0

    def __post_init__(self):
        if not (0.5 < self.p_hit < 1.0 and 0.0 < self.p_miss < 0.5):
            raise InvalidGeometry("need 0.5 < p_hit < 1 and 0 < p_miss < 0.5")
        if not self.l_min < 0.0 < self.l_max:
            raise InvalidGeometry("need l_min < 0 < l_max")
        if not 0.0 < self.occ_threshold < 1.0:
            raise InvalidGeometry("occ_threshold must lie in (0, 1)")
        if not self.max_range > 0:
            raise InvalidGeometry("max_range must be positive")

    @property
    def l_hit(self) -> float:
        return logit(self.p_hit)

    @property
    def l_miss(self) -> float:
        return logit(self.p_miss)

    @property
    def l_occ(self) -> float:
        return logit(self.occ_threshold)


def _spread_bits(v: int) -> int:
    out = 0
    for b in range(MAX_DEPTH):
        out |= ((v >> b) & 1) << (3 * b)
    return out


def dyadic_depth(side_length: float, resolution: float) -> int:
    """Return d with side_length == resolution * 2**d, or raise InvalidGeometry."""
    if not (side_length > 0 and resolution > 0):
        raise InvalidGeometry("side_length and resolution must be positive")
    ratio = side_length / resolution
    d = round(math.log2(ratio)) if ratio >= 1 else -1
    if d < 1 or abs(ratio - 2.0 ** d) > 1e-9 * ratio:
        raise InvalidGeometry(f"side_length/resolution = {ratio:.6g} is not 2^d with d >= 1")
    if d > MAX_DEPTH:
        raise InvalidGeometry(f"depth {d} exceeds supported maximum {MAX_DEPTH}")
    return d


def traverse(start, end, n: int):
    """Voxels crossed by the segment start->end, both given in voxel units.

    Incremental Amanatides-Woo stepping. Only axes that still have to move are
    stepped, so the walk lands exactly on the end voxel after |di|+|dj|+|dk|
    steps. Ties between axes go to x, then y, then z. The walk stops when it
    leaves [0, n)^3; the second return value tells whether the end voxel was
    reached inside the volume.
    """
    x0, y0, z0 = start
    x1, y1, z1 = end
    i, j, k = math.floor(x0), math.floor(y0), math.floor(z0)
    if not (0 <= i < n and 0 <= j < n and 0 <= k < n):
        return [], False
    ie, je, ke = math.floor(x1), math.floor(y1), math.floor(z1)
    inf = math.inf
    dx, dy, dz = x1 - x0, y1 - y0, z1 - z0
    if dx > 0:
        sx, tx, ddx = 1, (i + 1 - x0) / dx, 1.0 / dx
    elif dx < 0:
        sx, tx, ddx = -1, (i - x0) / dx, -1.0 / dx
    else:
        sx, tx, ddx = 0, inf, inf
    if dy > 0:
        sy, ty, ddy = 1, (j + 1 - y0) / dy, 1.0 / dy
    elif dy < 0:
        sy, ty, ddy = -1, (j - y0) / dy, -1.0 / dy
    else:
        sy, ty, ddy = 0, inf, inf
    if dz > 0:
        sz, tz, ddz = 1, (k + 1 - z0) / dz, 1.0 / dz
    elif dz < 0:
        sz, tz, ddz = -1, (k - z0) / dz, -1.0 / dz
    else:
        sz, tz, ddz = 0, inf, inf
    nx, ny, nz = abs(ie - i), abs(je - j), abs(ke - k)
    out = [(i, j, k)]
    for _ in range(nx + ny + nz):
        if nx and (not ny or tx <= ty) and (not nz or tx <= tz):
            i += sx
            nx -= 1
            tx += ddx
            if not 0 <= i < n:
                return out, False
        elif ny and (not nz or ty <= tz):
            j += sy
            ny -= 1
            ty += ddy
            if not 0 <= j < n:
                return out, False
        else:
            k += sz
            nz -= 1
            tz += ddz
            if not 0 <= k < n:
                return out, False
        out.append((i, j, k))
    return out, True


def scan_updates(origin_vox, endpoints_vox, hits, n: int, max_range_vox: float):
    """Per-scan voxel sets: (free, occupied), each voxel listed at most once.

    A voxel both crossed by one beam and hit by another counts as a hit.
    Beams longer than max_range are cut there and carve free space only.
    """
    free, occ = set(), set()
    ox, oy, oz = origin_vox
    for (ex, ey, ez), hit in zip(endpoints_vox, hits):
        dx, dy, dz = ex - ox, ey - oy, ez - oz
        dist = math.sqrt(dx * dx + dy * dy + dz * dz)
        if dist > max_range_vox:
            f = max_range_vox / dist
            ex, ey, ez = ox + dx * f, oy + dy * f, oz + dz * f
            hit = False
        cells, reached = traverse((ox, oy, oz), (ex, ey, ez), n)
        if reached:
            free.update(cells[:-1])
            if hit:
                occ.add(cells[-1])
        else:
            free.update(cells)
    free -= occ
    return free, occ


@dataclass
class OctreeMap:
    origin: np.ndarray
    side_length: float
    resolution: float
    params: SensorFusionParams = field(default_factory=SensorFusionParams)

    def __post_init__(self):
        self.origin = np.asarray(self.origin, dtype=float).reshape(3)
        self.depth = dyadic_depth(self.side_length, self.resolution)
        self.n = 2 ** self.depth
        self._table = [_spread_bits(v) for v in range(self.n)]
        self._table_np = np.array(self._table, dtype=np.int64)
        self._leaves: dict[int, float] = {}

    # -- addressing ---------------------------------------------------------
    def key(self, i: int, j: int, k: int) -> int:
        t = self._table
        return t[i] | (t[j] << 1) | (t[k] << 2)

    def keys_np(self, i, j, k) -> np.ndarray:
        t = self._table_np
        return t[i] | (t[j] << 1) | (t[k] << 2)

    def decode(self, codes) -> np.ndarray:
        """Morton codes -> (m, 3) voxel indices."""
        c = np.asarray(codes, dtype=np.int64)
        out = np.zeros((c.size, 3), dtype=np.int64)
        for b in range(self.depth):
            for axis in range(3):
                out[:, axis] |= ((c >> (3 * b + axis)) & 1) << b
        return out

    def voxel_of(self, point):
        u = (np.asarray(point, dtype=float) - self.origin) / self.resolution
        return tuple(int(math.floor(v)) for v in u)

    def contains(self, point) -> bool:
        i, j, k = self.voxel_of(point)
        return 0 <= i < self.n and 0 <= j < self.n and 0 <= k < self.n

    # -- state --------------------------------------------------------------
    @property
    def leaf_count(self) -> int:
        return len(self._leaves)

    def node_count(self) -> int:
        """Inner plus leaf nodes of the implied tree."""
        if not self._leaves:
            return 0
        codes = np.fromiter(self._leaves.keys(), dtype=np.int64, count=len(self._leaves))
        total = 0
        for level in range(self.depth + 1):
            total += np.unique(codes >> (3 * (self.depth - level))).size
        return total

    def items(self):
        """(voxel index triple, log-odds) for every stored leaf, in preorder."""
        codes = sorted(self._leaves)
        idx = self.decode(codes)
        return [(tuple(int(v) for v in row), self._leaves[c]) for row, c in zip(idx, codes)]

    def log_odds_at_voxel(self, i: int, j: int, k: int):
        if not (0 <= i < self.n and 0 <= j < self.n and 0 <= k < self.n):
            return None
        return self._leaves.get(self.key(i, j, k))

    def log_odds(self, point):
        return self.log_odds_at_voxel(*self.voxel_of(point))

    def query_state(self, point) -> CellState:
        lo = self.log_odds(point)
        if lo is None:
            return CellState.UNKNOWN
        return CellState.OCCUPIED if lo > self.params.l_occ else CellState.FREE

    # -- updates ------------------------------------------------------------
    def integrate_scan(self, sensor_origin, endpoints, hits=None) -> "OctreeMap":
        """Fuse one scan in place and return self."""
        o = np.asarray(sensor_origin, dtype=float).reshape(3)
        if not self.contains(o):
            raise OutOfBounds(f"sensor origin {o.tolist()} outside map")
        pts = np.asarray(endpoints, dtype=float).reshape(-1, 3)
        if hits is None:
            hits = [True] * len(pts)
        ov = ((o - self.origin) / self.resolution).tolist()
        ev = ((pts - self.origin) / self.resolution).tolist()
        free, occ = scan_updates(ov, ev, list(hits), self.n, self.params.max_range / self.resolution)
        self._apply(free, self.params.l_miss)
        self._apply(occ, self.params.l_hit)
        return self

    def _apply(self, voxels, delta: float):
        lo_min, lo_max = self.params.l_min, self.params.l_max
        leaves = self._leaves
        t = self._table
        for i, j, k in voxels:
            c = t[i] | (t[j] << 1) | (t[k] << 2)
            v = leaves.get(c, 0.0) + delta
            leaves[c] = lo_max if v > lo_max else (lo_min if v < lo_min else v)

    # -- derived products ---------------------------------------------------
    def _z_layers(self, z_min: float, z_max: float):
        if not z_min < z_max:
            raise InvalidGeometry("z_min must be below z_max")
        z0, res = self.origin[2], self.resolution
        k0 = max(0, math.floor((z_min - z0) / res))
        k1 = min(self.n, math.ceil((z_max - z0) / res))
        return k0, k1

    def project_2d(self, z_min: float, z_max: float, region=None) -> Grid2D:
        """Tri-state top-down projection over voxel layers intersecting [z_min, z_max].

        With region=(xmin, ymin, xmax, ymax) only the covering cells are
        produced, which keeps per-tick projection cost independent of map size.
        """
        k0, k1 = self._z_layers(z_min, z_max)
        res = self.resolution
        if region is None:
            i0 = j0 = 0
            i1 = j1 = self.n
        else:
            xmin, ymin, xmax, ymax = region
            i0 = math.floor((xmin - self.origin[0]) / res)
            j0 = math.floor((ymin - self.origin[1]) / res)
            i1 = math.ceil((xmax - self.origin[0]) / res)
            j1 = math.ceil((ymax - self.origin[1]) / res)
        shape = (max(i1 - i0, 1), max(j1 - j0, 1))
        out = np.zeros(shape, dtype=np.int8)
        origin_xy = (self.origin[0] + i0 * res, self.origin[1] + j0 * res)
        if k1 <= k0 or not self._leaves:
            return Grid2D(origin_xy, res, out)
        thr = self.params.l_occ
        if region is None or shape[0] * shape[1] * (k1 - k0) > len(self._leaves):
            codes = np.fromiter(self._leaves.keys(), dtype=np.int64, count=len(self._leaves))
            vals = np.fromiter(self._leaves.values(), dtype=float, count=len(self._leaves))
            idx = self.decode(codes)
            a, b = idx[:, 0] - i0, idx[:, 1] - j0
            sel = (idx[:, 2] >= k0) & (idx[:, 2] < k1) & (a >= 0) & (a < shape[0]) & (b >= 0) & (b < shape[1])
            a, b, v = a[sel], b[sel], vals[sel]
        else:
            ii, jj, kk = np.meshgrid(
                np.arange(i0, i0 + shape[0]), np.arange(j0, j0 + shape[1]), np.arange(k0, k1), indexing="ij"
            )
            ok = (ii >= 0) & (ii < self.n) & (jj >= 0) & (jj < self.n)
            ii, jj, kk = ii[ok], jj[ok], kk[ok]
            codes = self.keys_np(ii, jj, kk).tolist()
            got = [self._leaves.get(c) for c in codes]
            present = np.array([g is not None for g in got], dtype=bool)
            v = np.array([g for g in got if g is not None], dtype=float)
            a, b = ii[present] - i0, jj[present] - j0
        occ = np.zeros(shape, dtype=bool)
        free = np.zeros(shape, dtype=bool)
        occ[a[v > thr], b[v > thr]] = True
        free[a[v <= thr], b[v <= thr]] = True
        out[free] = CellState.FREE
        out[occ] = CellState.OCCUPIED
        return Grid2D(origin_xy, res, out)

    def coarsen(self, new_resolution: float) -> "OctreeMap":
        """Cut the tree k levels up; each coarse leaf keeps the max child log-odds."""
        ratio = new_resolution / self.resolution
        k = round(math.log2(ratio)) if ratio > 1 else 0
        if k < 1 or abs(ratio - 2.0 ** k) > 1e-9 * ratio:
            raise InvalidGeometry(f"{new_resolution} is not resolution * 2^k, k >= 1")
        if self.depth - k < 1:
            raise InvalidGeometry("coarsening would leave fewer than one subdivision")
        out = OctreeMap(self.origin.copy(), self.side_length, self.resolution * 2 ** k, self.params)
        shift = 3 * k
        merged = out._leaves
        for c in sorted(self._leaves):
            p = c >> shift
            v = self._leaves[c]
            if p not in merged or v > merged[p]:
                merged[p] = v
        return out

    # -- serialization ------------------------------------------------------
    def to_bytes(self) -> bytes:
        p = self.params
        head = _HEADER.pack(
            MAGIC, *self.origin.tolist(), self.side_length, self.resolution,
            p.p_hit, p.p_miss, p.l_min, p.l_max, p.occ_threshold,
        )
        if not self._leaves:
            return head
        codes = np.array(sorted(self._leaves), dtype=np.int64)
        chunks = [head]
        leaf_rec = struct.Struct("<Bd")
        d = self.depth

        def emit(level, lo, hi):
            if level == d:
                chunks.append(leaf_rec.pack(0, self._leaves[int(codes[lo])]))
                return
            shift = 3 * (d - level - 1)
            child = (codes[lo:hi] >> shift) & 7
            bounds = np.searchsorted(child, np.arange(9))
            mask = 0
            for c in range(8):
                if bounds[c + 1] > bounds[c]:
                    mask |= 1 << c
            chunks.append(bytes([mask]))
            for c in range(8):
                if bounds[c + 1] > bounds[c]:
                    emit(level + 1, lo + int(bounds[c]), lo + int(bounds[c + 1]))

        emit(0, 0, len(codes))
        return b"".join(chunks)

    @classmethod
    def from_bytes(cls, data: bytes, max_range: float = SensorFusionParams.max_range) -> "OctreeMap":
        if len(data) < _HEADER.size:
            raise FormatError("stream shorter than header")
        magic, ox, oy, oz, side, res, ph, pm, lmin, lmax, thr = _HEADER.unpack_from(data, 0)
        if magic != MAGIC:
            raise FormatError(f"bad magic {magic!r}")
        try:
            params = SensorFusionParams(ph, pm, lmin, lmax, thr, max_range)
            out = cls(np.array([ox, oy, oz]), side, res, params)
        except InvalidGeometry as exc:
            raise FormatError(f"invalid header: {exc}") from exc
        pos = _HEADER.size
        if pos == len(data):
            return out
        d = out.depth
        leaves = out._leaves

        def read(level, code):
            nonlocal pos
            if pos >= len(data):
                raise FormatError("truncated node record")
            mask = data[pos]
            pos += 1
            if level == d:
                if mask != 0:
                    raise FormatError("leaf-depth node with children")
                if pos + 8 > len(data):
                    raise FormatError("truncated leaf value")
                (v,) = struct.unpack_from("<d", data, pos)
                pos += 8
                if not (lmin <= v <= lmax):
                    raise FormatError(f"log-odds {v} outside clamp range")
                leaves[code] = v
                return
            if mask == 0:
                raise FormatError(f"empty inner node at level {level}")
            for c in range(8):
                if mask >> c & 1:
                    read(level + 1, (code << 3) | c)

        read(0, 0)
        if pos != len(data):
            raise FormatError(f"{len(data) - pos} trailing bytes")
        return out

    def save(self, path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path) -> "OctreeMap":
        return cls.from_bytes(Path(path).read_bytes())


def create_map(origin, side_length: float, resolution: float,
               params: SensorFusionParams | None = None) -> OctreeMap:
    return OctreeMap(origin, side_length, resolution, params or SensorFusionParams())


def query_state(octree: OctreeMap, point) -> CellState:
    return octree.query_state(point)


def load_points(path) -> np.ndarray:
    """Read whitespace-separated 'x y z' lines (metres); blank lines and '#' comments skipped."""
    rows = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 3:
            raise FormatError(f"line {lineno}: expected 3 columns, got {len(parts)}")
        try:
            rows.append([float(v) for v in parts])
        except ValueError as exc:
            raise FormatError(f"line {lineno}: {exc}") from exc
    return np.array(rows, dtype=float).reshape(-1, 3)


@dataclass
class EgoWindow:
    values: np.ndarray
    resolution: float
    frame: tuple[float, float, float]

    @property
    def width(self) -> int:
        return self.values.shape[0]

    @property
    def height(self) -> int:
        return self.values.shape[1]


def window_cell_centers(width: int, height: int, resolution: float):
    """Ego-frame centers; index [i, j] with i forward, j lateral (left positive)."""
    x = (np.arange(width) + 0.5) * resolution
    y = (np.arange(height) + 0.5) * resolution - height * resolution / 2.0
    return np.meshgrid(x, y, indexing="ij")


def ego_window(grid: Grid2D, ego_pose, width: int = 40, height: int = 40,
               resolution: float = 0.2) -> EgoWindow:
    """Sample the grid on a forward-facing window; +1 occupied, -1 free, 0 unknown."""
    X, Y, th = (float(v) for v in ego_pose)
    xs, ys = window_cell_centers(width, height, resolution)
    c, s = math.cos(th), math.sin(th)
    wx = X + c * xs - s * ys
    wy = Y + s * xs + c * ys
    vals = grid.states_at(wx, wy)
    return EgoWindow(vals.astype(np.int8), resolution, (X, Y, th))
