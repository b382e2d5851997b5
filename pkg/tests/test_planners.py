import math

import numpy as np
import pytest

from octonav.errors import InvalidGeometry, InvalidGoal, InvalidStart, NoPath, WheelSpeedExceeded
from octonav.grid import CellState, Grid2D
from octonav.kinematics import ControlSignal, KinematicParams, body_to_wheel
from octonav.planners import (PlannerConfig, footprint_blocked, holonomic_heuristic, hybrid_astar,
                              motion_primitives)
from oracles import check_path, connected, disk_hits_occupied, lattice_dijkstra
from scenes import pick_endpoints, random_obstacle_map

PARAMS = KinematicParams(0.165, 0.35, 9.0)


@pytest.fixture(scope="module")
def prims():
    return motion_primitives(PARAMS, 1.0, 5, 0.4)


def empty(n=100, res=0.2):
    return Grid2D((0.0, 0.0), res, -np.ones((n, n), dtype=np.int8))


def test_three_primitives():
    ps = motion_primitives(PARAMS, 1.0, 3, 0.4)
    w = [p.omega_z for p in ps]
    assert w == [-ps.kappa_max, 0.0, ps.kappa_max]
    for p in ps:
        body_to_wheel(ControlSignal(p.v_x, p.omega_z), PARAMS)
    x, y, th = ps.primitives[1].apply((1.0, 2.0, math.pi / 2))
    assert (x, y, th) == pytest.approx((1.0, 2.4, math.pi / 2), abs=1e-15)


def test_primitive_errors():
    with pytest.raises(InvalidGeometry):
        motion_primitives(PARAMS, 1.0, 4, 0.4)
    with pytest.raises(WheelSpeedExceeded):
        motion_primitives(PARAMS, 5.0, 5, 0.4)


def test_heuristic_octile_on_empty_grid():
    g = empty(30)
    h = holonomic_heuristic(g, (10, 20))
    i, j = np.meshgrid(np.arange(30), np.arange(30), indexing="ij")
    dx, dy = np.abs(i - 10), np.abs(j - 20)
    octile = 0.2 * (np.maximum(dx, dy) - np.minimum(dx, dy)) + 0.2 * math.sqrt(2) * np.minimum(dx, dy)
    assert np.allclose(h, octile, atol=1e-12)
    assert h[10, 20] == 0.0


def test_heuristic_wall_detour_and_goal_errors():
    st = -np.ones((30, 30), dtype=np.int8)
    st[15, 0:25] = 1
    g = Grid2D((0.0, 0.0), 0.2, st)
    h = holonomic_heuristic(g, (5, 5))
    assert h[25, 5] > 20 * 0.2 + 1e-9
    assert np.isinf(h[15, 3])
    with pytest.raises(InvalidGoal):
        holonomic_heuristic(g, (15, 3))


def test_empty_map_length(prims):
    plan = hybrid_astar(empty(), (1.0, 1.0, 0.0), (17.0, 1.0), prims)
    assert 16.0 - 0.3 <= plan.length <= 16.5
    assert 16.0 - 0.3 <= plan.cost <= 16.5
    assert plan.cost <= 1.05 * 16.0
    check_path(empty(), plan)


def test_full_wall_is_no_path(prims):
    st = -np.ones((100, 100), dtype=np.int8)
    st[50, :] = 1
    g = Grid2D((0.0, 0.0), 0.2, st)
    with pytest.raises(NoPath):
        hybrid_astar(g, (2.0, 10.0, 0.0), (18.0, 10.0), prims)
    assert not connected(st != 1, (10, 50), (90, 50))


def test_wall_with_gap(prims):
    st = -np.ones((100, 100), dtype=np.int8)
    st[50, :70] = 1
    st[50, 85:] = 1
    g = Grid2D((0.0, 0.0), 0.2, st)
    plan = hybrid_astar(g, (2.0, 10.0, 0.0), (18.0, 10.0), prims)
    assert plan.cost >= 16.0 - 0.3
    check_path(g, plan)
    # the path must cross x = 10 through the gap
    crossing = plan.dense(0.05)
    k = np.argmin(np.abs(crossing[:, 0] - 10.1))
    assert 14.0 <= crossing[k, 1] <= 17.0


def test_start_and_goal_errors(prims):
    st = -np.ones((100, 100), dtype=np.int8)
    st[10, 10] = 1
    g = Grid2D((0.0, 0.0), 0.2, st)
    with pytest.raises(InvalidStart):
        hybrid_astar(g, (2.1, 2.1, 0.0), (15.0, 15.0), prims)
    with pytest.raises(InvalidGoal):
        hybrid_astar(g, (15.0, 15.0, 0.0), (2.1, 2.1), prims)
    with pytest.raises(InvalidGoal):
        hybrid_astar(g, (15.0, 15.0, 0.0), (25.0, 2.0), prims)


def test_unknown_space_is_penalised(prims):
    st = np.zeros((100, 100), dtype=np.int8)
    g = Grid2D((0.0, 0.0), 0.2, st)
    plan = hybrid_astar(g, (1.0, 1.0, 0.0), (9.0, 1.0), prims)
    assert plan.cost == pytest.approx(1.5 * plan.length, rel=1e-12)


def test_footprint_blocked_is_exact_disk_test():
    rng = np.random.default_rng(3)
    st = -np.ones((40, 40), dtype=np.int8)
    st[rng.integers(0, 40, 30), rng.integers(0, 40, 30)] = 1
    g = Grid2D((0.0, 0.0), 0.2, st)
    blocked = footprint_blocked(g, 0.4)
    occ = st == 1
    for _ in range(3000):
        x, y = rng.uniform(0, 8, 2)
        i, j = (int(v) for v in g.cell_of(x, y))
        if disk_hits_occupied(x, y, 0.4, occ, g.origin, 0.2):
            assert blocked[i, j]


def test_random_maps_against_oracles(prims):
    rng = np.random.default_rng(11)
    for _ in range(8):
        g = random_obstacle_map(rng)
        start, goal, si, gi = pick_endpoints(rng, g)
        oracle = lattice_dijkstra(footprint_blocked(g, 0.4), si, gi, 0.2)
        plan = hybrid_astar(g, start, goal, prims)
        euclid = math.hypot(goal[0] - start[0], goal[1] - start[1])
        assert euclid - 0.3 <= plan.cost <= oracle * 1.05
        check_path(g, plan)


def test_deterministic(prims):
    rng = np.random.default_rng(5)
    g = random_obstacle_map(rng)
    start, goal, _, _ = pick_endpoints(rng, g)
    a = hybrid_astar(g, start, goal, prims)
    b = hybrid_astar(g, start, goal, prims)
    assert np.array_equal(a.poses, b.poses) and np.array_equal(a.g, b.g)


def test_plan_csv_and_points(tmp_path, prims):
    plan = hybrid_astar(empty(), (1.0, 1.0, 0.0), (9.0, 1.0), prims)
    path = tmp_path / "plan.csv"
    plan.to_csv(path)
    rows = path.read_text().splitlines()
    assert rows[0] == "x,y,theta,g" and len(rows) == len(plan.poses) + 1
    pts = plan.points_at([0.0, 0.4, 100.0])
    assert pts[0] == pytest.approx([1.0, 1.0])
    assert pts[1] == pytest.approx(plan.poses[1, :2])
    assert pts[2] == pytest.approx(plan.poses[-1, :2])


def test_expansion_limit(prims):
    with pytest.raises(NoPath):
        hybrid_astar(empty(), (1.0, 1.0, 0.0), (17.0, 17.0), prims, PlannerConfig(max_expansions=5))
