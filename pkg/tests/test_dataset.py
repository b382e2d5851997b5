import logging
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from octonav.dataset import (Dataset, GridSpec, MapBuilderConfig, allocate_runs, build_samples, cell_of_position,
                             from_bytes, position_of_cell, split_dataset, to_bytes)
from octonav.errors import InsufficientLog, InsufficientRuns, InvalidClass, LabelOutOfWindow
from octonav.kinematics import KinematicParams
from octonav.world import Circle, World, collect_run, make_route

PARAMS = KinematicParams(0.165, 0.35, 9.0)
SPEC = GridSpec(40, 40, 0.2)


def oracle_cell(p, anchor, spec):
    """Cell index via an explicit rotation of the offset into the anchor frame, or None outside."""
    x, y, th = anchor
    dx, dy = p[0] - x, p[1] - y
    xe = math.cos(th) * dx + math.sin(th) * dy
    ye = -math.sin(th) * dx + math.cos(th) * dy
    i = math.floor(xe / spec.resolution)
    j = math.floor((ye + spec.height * spec.resolution / 2) / spec.resolution)
    if 0 <= i < spec.width and 0 <= j < spec.height:
        return i * spec.height + j
    return None


@pytest.fixture(scope="module")
def straight_log():
    world = World((-5, -8, 40, 8), (Circle(6.0, 2.5, 1.0),))
    return collect_run(world, make_route("line", 0.2, length=30.0), PARAMS, 0.1, 100)


@pytest.fixture(scope="module")
def curved_log():
    world = World((-10, -10, 10, 10))
    route = make_route("circle", 0.2, center=(0.0, 0.0), radius=2.0, turns=2.0)
    return collect_run(world, route, PARAMS, 0.1, 160, run_id=3)


def test_cell_examples():
    assert cell_of_position((0.1, 0.1), (0, 0, 0), SPEC) == 20
    assert cell_of_position((0.2, 0.1), (0, 0, 0), SPEC) == 60
    with pytest.raises(LabelOutOfWindow):
        cell_of_position((-0.01, 0.0), (0, 0, 0), SPEC)
    with pytest.raises(LabelOutOfWindow):
        cell_of_position((8.0, 0.0), (0, 0, 0), SPEC)
    assert position_of_cell(20, (0, 0, 0), SPEC) == pytest.approx([0.1, 0.1])
    with pytest.raises(InvalidClass):
        position_of_cell(SPEC.n_classes, (0, 0, 0), SPEC)
    with pytest.raises(InvalidClass):
        position_of_cell(-1, (0, 0, 0), SPEC)


@settings(max_examples=300, deadline=None)
@given(st.floats(-50, 50), st.floats(-50, 50), st.floats(-math.pi, math.pi),
       st.floats(0.0, 7.99), st.floats(-3.99, 3.99))
def test_cell_roundtrip(ax, ay, th, xe, ye):
    anchor = (ax, ay, th)
    p = (ax + math.cos(th) * xe - math.sin(th) * ye, ay + math.sin(th) * xe + math.cos(th) * ye)
    expected = oracle_cell(p, anchor, SPEC)
    if expected is None:  # rounding pushed a boundary point outside
        with pytest.raises(LabelOutOfWindow):
            cell_of_position(p, anchor, SPEC)
        return
    c = cell_of_position(p, anchor, SPEC)
    assert c == expected
    q = position_of_cell(c, anchor, SPEC)
    assert math.dist(p, q) <= SPEC.resolution * math.sqrt(2) / 2 + 1e-9


def test_window_count(straight_log):
    res = build_samples(straight_log, SPEC, 4, 10)
    assert len(straight_log) == 100
    assert len(res) + res.dropped == 100 - 4 - 10
    assert len(res) <= 86
    s = res[0]
    assert s.windows.shape == (5, 40, 40) and s.ref_window.shape == (15, 2) and s.labels.shape == (10,)


def test_straight_labels_move_forward(straight_log):
    res = build_samples(straight_log, SPEC, 4, 10, step=3)
    assert len(res) > 0 and res.dropped == 0
    for s in res:
        i = s.labels // SPEC.height
        assert np.all(np.diff(i) > 0)


def test_labels_decode_to_logged_positions(curved_log):
    res = build_samples(curved_log, SPEC, 4, 10, step=2)
    assert len(res) > 0
    for s in res:
        for c, p in zip(s.labels, s.future):
            assert c == oracle_cell(p, s.anchor_pose, SPEC)
            assert math.dist(position_of_cell(int(c), s.anchor_pose, SPEC), p) <= 0.2 * math.sqrt(2) / 2 + 1e-9


def test_dropped_accounting(curved_log, caplog):
    small = GridSpec(4, 4, 0.2)
    with caplog.at_level(logging.WARNING):
        res = build_samples(curved_log, small, 2, 10)
    assert res.dropped > 0
    assert len(res) + res.dropped == len(curved_log) - 2 - 10
    assert "dropped" in caplog.text


def test_insufficient_log(straight_log):
    with pytest.raises(InsufficientLog):
        build_samples(straight_log, SPEC, 4, 10, step=10)
    short = type(straight_log)(0, "r", straight_log.route, 0.1, 1.0, straight_log.records[:10])
    with pytest.raises(InsufficientLog):
        build_samples(short, SPEC, 4, 10)


def test_windows_see_the_obstacle(straight_log):
    res = build_samples(straight_log, SPEC, 4, 10, map_config=MapBuilderConfig(0.2))
    occupied = [int((s.windows[-1] == 1).sum()) for s in res]
    assert max(occupied) > 0


def fake_samples(n_runs, per_run, base):
    out = []
    for r in range(n_runs):
        for k in range(per_run):
            s = base[(r * per_run + k) % len(base)]
            out.append(type(s)(s.windows, s.ref_window, s.labels, s.anchor_pose, s.future, run_id=r, tick=k))
    return out


def test_split_by_runs(straight_log):
    base = list(build_samples(straight_log, SPEC, 4, 10))
    samples = fake_samples(10, 10, base)
    ds = split_dataset(samples, (0.8, 0.1, 0.1), seed=5)
    runs = [{s.run_id for s in ds.subset(n)} for n in ("train", "val", "test")]
    assert [len(r) for r in runs] == [8, 1, 1]
    assert not (runs[0] & runs[1]) and not (runs[0] & runs[2]) and not (runs[1] & runs[2])
    again = split_dataset(samples, (0.8, 0.1, 0.1), seed=5)
    assert np.array_equal(ds.split, again.split)
    with pytest.raises(InsufficientRuns):
        split_dataset(fake_samples(2, 3, base), (0.8, 0.1, 0.1))
    assert allocate_runs(7, (0.8, 0.1, 0.1)) == [5, 1, 1]
    assert sum(allocate_runs(23, (0.8, 0.1, 0.1))) == 23


def test_container_roundtrip(straight_log, tmp_path):
    samples = fake_samples(3, 5, list(build_samples(straight_log, SPEC, 4, 10)))
    ds = split_dataset(samples, (0.8, 0.1, 0.1), seed=1)
    path = tmp_path / "d.opd"
    ds.save(path)
    back = Dataset.load(path)
    assert to_bytes(back) == to_bytes(ds) == path.read_bytes()
    assert np.array_equal(back.split, ds.split)
    for a, b in zip(ds.samples, back.samples):
        for f in ("windows", "ref_window", "labels", "anchor_pose", "future"):
            assert np.array_equal(getattr(a, f), getattr(b, f))
        assert (a.run_id, a.tick) == (b.run_id, b.tick)
    data = to_bytes(ds)
    from octonav.errors import FormatError
    for bad in (b"XXXX" + data[4:], data[:-3], data[:10]):
        with pytest.raises(FormatError):
            from_bytes(bad)
