"""Independent reference implementations used by the tests."""
from __future__ import annotations

import heapq
import math

import numpy as np

from octonav.octree import traverse


class DenseOccupancy:
    """Dense log-odds array; NaN marks never-touched voxels."""

    def __init__(self, n, origin, resolution, params):
        self.lo = np.full((n, n, n), np.nan)
        self.n = n
        self.origin = np.asarray(origin, dtype=float)
        self.res = resolution
        self.p = params

    def integrate(self, sensor_origin, endpoints, hits):
        o = (np.asarray(sensor_origin, dtype=float) - self.origin) / self.res
        rng = self.p.max_range / self.res
        free, occ = {}, {}
        for e, hit in zip(np.asarray(endpoints, dtype=float), hits):
            ev = (e - self.origin) / self.res
            d = ev - o
            dist = math.sqrt(float(d[0] ** 2 + d[1] ** 2 + d[2] ** 2))
            if dist > rng:
                ev = o + d * (rng / dist)
                hit = False
            cells, reached = traverse(o.tolist(), ev.tolist(), self.n)
            passed = cells[:-1] if reached else cells
            for c in passed:
                free[c] = True
            if reached and hit:
                occ[cells[-1]] = True
        for c in occ:
            free.pop(c, None)
        for cells, delta in ((free, math.log(self.p.p_miss / (1 - self.p.p_miss))),
                             (occ, math.log(self.p.p_hit / (1 - self.p.p_hit)))):
            for c in cells:
                cur = self.lo[c]
                v = (0.0 if np.isnan(cur) else float(cur)) + delta
                self.lo[c] = min(max(v, self.p.l_min), self.p.l_max)

    def state(self):
        """+1 occupied, -1 free, 0 unknown."""
        thr = math.log(self.p.occ_threshold / (1 - self.p.occ_threshold))
        out = np.zeros(self.lo.shape, dtype=np.int8)
        known = ~np.isnan(self.lo)
        out[known & (self.lo > thr)] = 1
        out[known & ~(self.lo > thr)] = -1
        return out


def lattice_dijkstra(blocked: np.ndarray, start, goal, res: float) -> float:
    """8-connected shortest path length over unblocked cells; inf if unreachable."""
    nx, ny = blocked.shape
    if blocked[start] or blocked[goal]:
        return math.inf
    dist = {start: 0.0}
    pq = [(0.0, start)]
    diag = res * math.sqrt(2.0)
    while pq:
        d, (i, j) = heapq.heappop(pq)
        if (i, j) == goal:
            return d
        if d > dist[(i, j)]:
            continue
        for di in (-1, 0, 1):
            for dj in (-1, 0, 1):
                if di == 0 and dj == 0:
                    continue
                a, b = i + di, j + dj
                if 0 <= a < nx and 0 <= b < ny and not blocked[a, b]:
                    nd = d + (diag if di and dj else res)
                    if nd < dist.get((a, b), math.inf):
                        dist[(a, b)] = nd
                        heapq.heappush(pq, (nd, (a, b)))
    return math.inf


def connected(free: np.ndarray, start, goal) -> bool:
    """4/8-connectivity flood fill (8-connected) over free cells."""
    from collections import deque

    nx, ny = free.shape
    if not (free[start] and free[goal]):
        return False
    seen = {start}
    q = deque([start])
    while q:
        i, j = q.popleft()
        if (i, j) == goal:
            return True
        for di in (-1, 0, 1):
            for dj in (-1, 0, 1):
                a, b = i + di, j + dj
                if 0 <= a < nx and 0 <= b < ny and free[a, b] and (a, b) not in seen:
                    seen.add((a, b))
                    q.append((a, b))
    return False


def disk_hits_occupied(x, y, radius, occupied: np.ndarray, origin, res) -> bool:
    """Exact disk vs occupied-square intersection test."""
    i0 = math.floor((x - radius - origin[0]) / res)
    i1 = math.floor((x + radius - origin[0]) / res)
    j0 = math.floor((y - radius - origin[1]) / res)
    j1 = math.floor((y + radius - origin[1]) / res)
    nx, ny = occupied.shape
    for i in range(max(i0, 0), min(i1, nx - 1) + 1):
        for j in range(max(j0, 0), min(j1, ny - 1) + 1):
            if not occupied[i, j]:
                continue
            cx0 = origin[0] + i * res
            cy0 = origin[1] + j * res
            dx = max(cx0 - x, 0.0, x - (cx0 + res))
            dy = max(cy0 - y, 0.0, y - (cy0 + res))
            if dx * dx + dy * dy < radius * radius:
                return True
    return False


def ray_cast(world, x, y, angle, max_range):
    """Scalar ray cast against circles, rectangles and the bounding walls: (range, hit)."""
    dx, dy = math.cos(angle), math.sin(angle)
    best, hit = max_range, False
    xmin, ymin, xmax, ymax = world.bounds
    cands = []
    if dx > 0:
        cands.append((xmax - x) / dx)
    if dx < 0:
        cands.append((xmin - x) / dx)
    if dy > 0:
        cands.append((ymax - y) / dy)
    if dy < 0:
        cands.append((ymin - y) / dy)
    for shape in world.shapes():
        if hasattr(shape, "r"):
            ox, oy = x - shape.cx, y - shape.cy
            b = dx * ox + dy * oy
            c = ox * ox + oy * oy - shape.r ** 2
            disc = b * b - c
            if disc >= 0:
                t = -b - math.sqrt(disc)
                if t >= 0:
                    cands.append(t)
        else:
            t0, t1 = -math.inf, math.inf
            ok = True
            for p, d, lo, hi in ((x, dx, shape.xmin, shape.xmax), (y, dy, shape.ymin, shape.ymax)):
                if d == 0:
                    ok = ok and lo <= p <= hi
                else:
                    a, b = (lo - p) / d, (hi - p) / d
                    t0, t1 = max(t0, min(a, b)), min(t1, max(a, b))
            if ok and t0 <= t1 and t1 >= 0:
                cands.append(max(t0, 0.0))
    for t in cands:
        if 0 <= t <= max_range and t < best:
            best, hit = t, True
    return best, hit


def _sig(v):
    return 1.0 / (1.0 + np.exp(-v))


def naive_outputs(params, x, prev, n_layers=1, head="classification"):
    """Loop-level evaluation of the gated encoder-decoder for one sequence.

    x (T, D) encoder inputs; prev are the decoder's previous outputs, the first
    of which is the start token (class index) or ignored (regression).
    Returns the output pre-activations (tau_o, out).
    """
    seq = [np.asarray(v, dtype=float) for v in x]
    for layer in range(n_layers):
        p = lambda n: params[f"enc{layer}.{n}"]
        h = np.zeros(p("U_hz").shape[0])
        out = []
        for v in seq:
            z = _sig(v @ p("U_xz") + h @ p("U_hz") + p("b_z"))
            r = _sig(v @ p("U_xr") + h @ p("U_hr") + p("b_r"))
            cand = np.tanh(v @ p("U_xh") + (r * h) @ p("U_rh") + p("b_h"))
            h = (1 - z) * h + z * cand
            out.append(h)
        seq = out
    c = seq[-1]
    d = lambda n: params[f"dec.{n}"]
    s = np.zeros_like(c)
    outs = []
    for k, y in enumerate(prev):
        if head == "classification":
            e = params["E"][y]
        else:
            e = params["e_start"] if k == 0 else np.asarray(y) @ params["E_pt"]
        z = _sig(e @ d("U_yz") + s @ d("U_sz") + c @ d("C_cz") + d("b_z"))
        r = _sig(e @ d("U_yr") + s @ d("U_sr") + c @ d("C_cr") + d("b_r"))
        cand = np.tanh(e @ d("U_ys") + (r * s) @ d("U_rs") + c @ d("C_cs") + d("b_s"))
        s = (1 - z) * s + z * cand
        outs.append((e + s @ params["U_s"] + c @ params["U_c"]) @ params["U_o"] + params["b_o"])
    return np.array(outs)


def naive_loss(params, X, targets, n_classes=None, n_layers=1, head="classification"):
    """Mean NLL (floor 1e-12) or mean squared error with teacher forcing, sample by sample."""
    total, count = 0.0, 0
    for x, y in zip(X, targets):
        if head == "classification":
            prev = [n_classes] + [int(v) for v in y[:-1]]
            o = naive_outputs(params, x, prev, n_layers, head)
            for row, label in zip(o, y):
                p = np.exp(row - row.max())
                p /= p.sum()
                total += -math.log(max(p[label], 1e-12))
                count += 1
        else:
            prev = [None] + list(y[:-1])
            o = naive_outputs(params, x, prev, n_layers, head)
            total += float(((o - y) ** 2).sum())
            count += len(y)
    return total / count


def finite_difference(f, params, key, idx, h=1e-5):
    old = params[key][idx]
    params[key][idx] = old + h
    up = f(params)
    params[key][idx] = old - h
    down = f(params)
    params[key][idx] = old
    return (up - down) / (2 * h)


def gradient_check(params, spec, X, targets, coords, h=1e-5):
    """Max relative error between analytic gradients and central differences of naive_loss.

    Relative error = |a - n| / max(|a|, |n|, 1e-8) over the sampled (name, index) coordinates.
    """
    from octonav.seq2seq.model import loss_and_grads

    _, grads = loss_and_grads(params, spec, X, targets)
    f = lambda p: naive_loss(p, X, targets, spec.n_classes, spec.n_layers, spec.head)
    worst = 0.0
    for key, idx in coords:
        num = finite_difference(f, params, key, idx, h)
        ana = grads[key][idx]
        worst = max(worst, abs(ana - num) / max(abs(ana), abs(num), 1e-8))
    return worst


def random_coords(params, rng, n):
    """n (name, index) pairs, each parameter drawn proportional to its size."""
    names = list(params)
    sizes = np.array([params[k].size for k in names], dtype=float)
    out = []
    for k in rng.choice(len(names), size=n, p=sizes / sizes.sum()):
        out.append((names[k], tuple(int(rng.integers(s)) for s in params[names[k]].shape)))
    return out


def check_path(grid, plan, radius=0.4):
    """Assert kinematic consistency and a collision-free footprint at sub-cell spacing along the plan."""
    from octonav.grid import CellState

    occ = grid.states == CellState.OCCUPIED
    res = grid.resolution
    for k, prim in enumerate(plan.controls):
        end = prim.apply(tuple(plan.poses[k]))
        assert np.allclose(end, plan.poses[k + 1], atol=1e-9, rtol=0)
        n = max(1, math.ceil(prim.length / (res / 2)))
        x, y, _ = plan.poses[k]
        assert not disk_hits_occupied(x, y, radius, occ, grid.origin, res)
        for m in range(1, n + 1):
            x, y, _ = prim.apply(tuple(plan.poses[k]), prim.duration * m / n)
            assert not disk_hits_occupied(x, y, radius, occ, grid.origin, res)
