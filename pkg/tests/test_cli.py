import csv
import math
from pathlib import Path

import pytest

from octonav import cli
from octonav.config import RunConfig, derive_seed, dump_config, parse_config, parse_text
from octonav.errors import ConfigError

SMOKE = str(Path(__file__).resolve().parents[1] / "configs" / "smoke.conf")


def test_empty_config_gives_defaults(tmp_path):
    path = tmp_path / "empty.conf"
    path.write_text("")
    cfg = parse_config(path)
    assert cfg.dataset.tau_o == 10 and cfg.train.learning_rate == 3e-4
    assert cfg == parse_config(None) == RunConfig()


def test_config_errors(tmp_path):
    with pytest.raises(ConfigError) as exc:
        parse_text("foo = 1")
    assert exc.value.key == "foo"
    with pytest.raises(ConfigError) as exc:
        parse_text("dataset.tau_o = 0")
    assert exc.value.key == "dataset.tau_o"
    with pytest.raises(ConfigError):
        parse_text("train.epochs = many")
    with pytest.raises(ConfigError):
        parse_text("grid = 3")
    with pytest.raises(OSError):
        parse_config(tmp_path / "missing.conf")
    assert cli.main(["simulate", "--set", "foo=1", "--out", str(tmp_path)]) == 2
    assert cli.main(["simulate", "--config", str(tmp_path / "missing.conf")]) == 1


def test_config_text_roundtrip():
    cfg = parse_text("train.heads = regression\nworld.kinds = circle  # comment\nseed = 4", ["grid.resolution=0.4"])
    assert cfg.train.heads == ("regression",) and cfg.world.kinds == ("circle",) and cfg.seed == 4
    assert parse_text(dump_config(cfg)) == cfg


def test_seed_schedule():
    import hashlib
    assert derive_seed(3, "world") == int.from_bytes(hashlib.sha256(b"3:world").digest()[:4], "little")
    assert derive_seed(3, "world") != derive_seed(3, "split")


@pytest.fixture(scope="module")
def smoke(tmp_path_factory):
    out = tmp_path_factory.mktemp("smoke")
    code = cli.main(["pipeline", "--config", SMOKE, "--out", str(out), "--set", "world.ticks=130"])
    assert code == 0
    return out


def test_pipeline_artifacts(smoke):
    for name in ("logs/index.json", "logs/run_0000.jsonl", "dataset.opd", "octopath.opm", "regression.opm",
                 "learning_curve_classification.csv", "report.csv", "error_curve.csv", "error_curve.svg",
                 "latency.json"):
        assert (smoke / name).exists(), name
    rows = list(csv.DictReader(open(smoke / "report.csv")))
    assert {r["method"] for r in rows} == {"octopath", "regression", "hybrid_astar", "oracle"}
    assert all(float(r["rmse"]) == 0.0 for r in rows if r["method"] == "oracle")
    curve = (smoke / "learning_curve_regression.csv").read_text().splitlines()
    assert len(curve) == 1 + 3


def test_predict(smoke, tmp_path):
    out = tmp_path / "pred.csv"
    args = ["predict", "--config", SMOKE, "--out", str(smoke), "--log", str(smoke / "logs" / "run_0000.jsonl"),
            "--tick", "40", "--output", str(out)]
    assert cli.main(args) == 0
    rows = list(csv.DictReader(open(out)))
    assert len(rows) == 10 and [int(r["step"]) for r in rows] == list(range(1, 11))
    assert cli.main(args + ["--beam", "3"]) == 0
    assert cli.main(args + ["--head", "regression"]) == 0


def test_predict_with_mismatched_grid(smoke, tmp_path):
    args = ["predict", "--config", SMOKE, "--out", str(smoke), "--log", str(smoke / "logs" / "run_0000.jsonl"),
            "--tick", "40", "--output", str(tmp_path / "p.csv"), "--set", "grid.width=20"]
    assert cli.main(args) == 2
    cfg = parse_config(SMOKE, [f"out={smoke}", "grid.resolution=0.4"])
    with pytest.raises(ConfigError):
        cli._checkpoint_for(cfg, "classification")


def test_sweep_rows(smoke, tmp_path):
    out = tmp_path / "sweep"
    out.mkdir()
    (out / "logs").symlink_to(smoke / "logs")
    assert cli.main(["sweep", "--config", SMOKE, "--out", str(out)]) == 0
    rows = list(csv.DictReader(open(out / "sweep.csv")))
    assert [(float(r["resolution"]), int(r["hidden"])) for r in rows] == [(0.2, 8), (0.2, 16), (0.4, 8), (0.4, 16)]
    assert all(math.isfinite(float(r["rmse"])) and float(r["train_seconds"]) >= 0 for r in rows)


def test_map_build_and_plan(tmp_path):
    pts = tmp_path / "wall.xyz"
    pts.write_text("# wall at x = 3\n" + "\n".join(f"3.0 {y / 10:.1f} 0.0" for y in range(-15, 16)) + "\n")
    oct_path = tmp_path / "map.oct"
    assert cli.main(["map-build", str(pts), "--out", str(tmp_path), "--output", str(oct_path)]) == 0
    from octonav.octree import OctreeMap
    grid = OctreeMap.load(oct_path).project_2d(-0.1, 0.1)
    assert grid.state_at(3.05, 0.05) == 1
    plan = tmp_path / "plan.csv"
    assert cli.main(["plan", "--map", str(oct_path), "--start", "0", "0", "0", "--goal", "6", "0",
                     "--out", str(tmp_path), "--output", str(plan)]) == 0
    rows = list(csv.reader(open(plan)))
    xs = [float(r[0]) for r in rows[1:]]
    ys = [float(r[1]) for r in rows[1:]]
    assert xs[-1] == pytest.approx(6.0, abs=0.5)
    assert max(abs(y) for x, y in zip(xs, ys) if 2.4 < x < 3.6) > 1.5 + 0.4
    assert cli.main(["map-build", str(tmp_path / "none.xyz"), "--out", str(tmp_path)]) == 1
