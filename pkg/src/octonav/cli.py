"""Command line entry point: simulate, dataset, train, predict, plan, bench, sweep, map-build, pipeline."""
from __future__ import annotations

import argparse
import copy
import csv
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .dataset import Dataset, GridSpec, MapBuilderConfig, build_samples, split_dataset
from .errors import ConfigError, MissingArtifact, OctonavError
from .eval import BaselineConfig, BenchConfig, latency_bench, run_benchmark
from .kinematics import KinematicParams
from .octree import OctreeMap, SensorFusionParams, create_map, load_points
from .planners import PlannerConfig, hybrid_astar, motion_primitives
from .seq2seq import checkpoint
from .seq2seq.model import ModelSpec
from .seq2seq.training import TrainConfig, predict, predict_batch, train
from .world import DriveLog, TeacherConfig, collect_run, random_scenario

log = logging.getLogger("octonav")

HEAD_FILES = {"classification": "octopath.opm", "regression": "regression.opm"}


def kinematic_params(cfg) -> KinematicParams:
    k = cfg.kinematics
    return KinematicParams(k.r, k.y_icr0, k.omega_wheel_max)


def grid_spec(cfg) -> GridSpec:
    return GridSpec(cfg.grid.width, cfg.grid.height, cfg.grid.resolution)


def _out(cfg) -> Path:
    p = Path(cfg.out)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _require(path: Path, what: str) -> Path:
    if not path.exists():
        raise MissingArtifact(f"{what} not found: {path} (run the producing subcommand first)")
    return path


# ---------------------------------------------------------------- commands --
def cmd_simulate(cfg, args) -> int:
    """Worlds and routes -> one DriveLog per run plus a scenario index."""
    out = _out(cfg) / "logs"
    out.mkdir(parents=True, exist_ok=True)
    w = cfg.world
    params = kinematic_params(cfg)
    teacher = TeacherConfig(speed=w.speed, footprint_radius=w.footprint_radius, n_beams=w.n_beams,
                            max_range=w.max_range)
    base = cfgmod.derive_seed(cfg.seed, "world")
    index = []
    run_id = 0
    for kind in w.kinds:
        made, attempt = 0, 0
        while made < w.runs_per_kind:
            if attempt > 10 * w.runs_per_kind:
                raise OctonavError(f"could not generate collision-free {kind} runs")
            scen_seed = (base + 7919 * attempt + 104729 * list(w.kinds).index(kind)) % 2 ** 32
            attempt += 1
            world, route = random_scenario(kind, scen_seed, (w.blocking_min, w.blocking_max),
                                           (w.clutter_min, w.clutter_max), w.n_dynamic)
            drive = collect_run(world, route, params, w.dt, w.ticks, teacher, run_id=run_id, route_id=kind)
            if drive.aborted:
                log.info("%s scenario %d aborted after %d ticks, retrying", kind, scen_seed, len(drive))
                continue
            drive.save(out / f"run_{run_id:04d}.jsonl")
            index.append({"run_id": run_id, "kind": kind, "scenario_seed": scen_seed, "ticks": len(drive)})
            run_id += 1
            made += 1
    (out / "index.json").write_text(json.dumps(index, indent=1) + "\n")
    print(f"simulated {len(index)} runs -> {out}")
    return 0


def _load_logs(cfg) -> list[DriveLog]:
    d = _require(Path(cfg.out) / "logs", "drive logs")
    files = sorted(d.glob("run_*.jsonl"))
    if not files:
        raise MissingArtifact(f"no drive logs in {d}")
    return [DriveLog.load(f) for f in files]


def _map_config(cfg) -> MapBuilderConfig:
    return MapBuilderConfig(cfg.grid.resolution, cfg.dataset.z_min, cfg.dataset.z_max,
                            fusion=SensorFusionParams(max_range=cfg.world.max_range))


def build_dataset(cfg, logs, spec: GridSpec) -> tuple[Dataset, dict]:
    d = cfg.dataset
    samples, stats = [], {"samples": 0, "dropped": 0}
    for drive in logs:
        res = build_samples(drive, spec, d.tau_i, d.tau_o, _map_config(cfg), d.step, d.stride)
        samples += res.samples
        stats["samples"] += len(res)
        stats["dropped"] += res.dropped
    ds = split_dataset(samples, d.ratios, cfgmod.derive_seed(cfg.seed, "split"), spec, d.tau_i, d.tau_o)
    return ds, stats


def cmd_dataset(cfg, args) -> int:
    ds, stats = build_dataset(cfg, _load_logs(cfg), grid_spec(cfg))
    path = _out(cfg) / "dataset.opd"
    ds.save(path)
    print(f"{stats['samples']} samples ({stats['dropped']} dropped), "
          f"train/val/test {len(ds.train)}/{len(ds.val)}/{len(ds.test)} -> {path}")
    return 0


def _load_dataset(cfg) -> Dataset:
    ds = Dataset.load(_require(Path(cfg.out) / "dataset.opd", "dataset"))
    if (ds.grid_spec.width, ds.grid_spec.height) != (cfg.grid.width, cfg.grid.height) \
            or ds.grid_spec.resolution != cfg.grid.resolution:
        raise ConfigError("grid", f"dataset grid {ds.grid_spec} does not match the configured grid")
    return ds


def model_spec(cfg, head: str, spec: GridSpec | None = None) -> ModelSpec:
    g = spec or grid_spec(cfg)
    return ModelSpec.for_grid(g.width, g.height, cfg.dataset.tau_i, cfg.dataset.tau_o,
                              hidden_dim=cfg.model.hidden_dim, embed_dim=cfg.model.embed_dim,
                              head=head, n_layers=cfg.model.n_layers)


def train_config(cfg, head: str, epochs: int | None = None) -> TrainConfig:
    t = cfg.train
    return TrainConfig(t.learning_rate, epochs or t.epochs, t.batch_size, cfgmod.derive_seed(cfg.seed, f"train.{head}"),
                       teacher_forcing=t.teacher_forcing)


def cmd_train(cfg, args) -> int:
    ds = _load_dataset(cfg)
    out = _out(cfg)
    g = ds.grid_spec
    for head in cfg.train.heads:
        spec = model_spec(cfg, head, g)
        res = train(ds.train, spec, train_config(cfg, head), val_samples=ds.val)
        checkpoint.save(out / HEAD_FILES[head], res.params, spec, (g.width, g.height, g.resolution))
        res.write_curve(out / f"learning_curve_{head}.csv")
        print(f"{head}: best epoch {res.best_epoch}, final train {res.curve[-1][1]:.4f} "
              f"-> {out / HEAD_FILES[head]}")
    return 0


def _checkpoint_for(cfg, head: str, path=None):
    p = Path(path) if path else Path(cfg.out) / HEAD_FILES[head]
    params, spec, grid, _ = checkpoint.load(_require(p, f"{head} checkpoint"))
    g = grid_spec(cfg)
    if grid is not None and (grid[0], grid[1], grid[2]) != (g.width, g.height, g.resolution):
        raise ConfigError("grid", f"checkpoint grid {grid} does not match configured grid "
                                  f"({g.width}, {g.height}, {g.resolution})")
    if spec.tau_i != cfg.dataset.tau_i or spec.tau_o != cfg.dataset.tau_o:
        raise ConfigError("dataset.tau_o", "checkpoint horizons do not match the configuration")
    return params, spec


def cmd_predict(cfg, args) -> int:
    """Predict from one tick of a drive log; writes step, x, y (global) CSV."""
    head = "regression" if args.head == "regression" else "classification"
    params, spec = _checkpoint_for(cfg, head, args.checkpoint)
    drive = DriveLog.load(_require(Path(args.log), "drive log"))
    g = grid_spec(cfg)
    d = cfg.dataset
    res = build_samples(drive, g, d.tau_i, d.tau_o, _map_config(cfg), d.step, 1)
    match = [s for s in res.samples if s.tick == args.tick]
    if not match:
        raise ConfigError("tick", f"no complete sample at tick {args.tick} in {args.log}")
    s = match[0]
    decode = ("beam", args.beam) if args.beam and head == "classification" else "greedy"
    pr = predict(params, spec, s.windows, s.ref_window, s.anchor_pose, g, decode)
    out = Path(args.output) if args.output else _out(cfg) / f"prediction_tick{args.tick}.csv"
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "x", "y", "true_x", "true_y"])
        for k, (p, t) in enumerate(zip(pr.points, s.future), 1):
            w.writerow([k, f"{p[0]:.6f}", f"{p[1]:.6f}", f"{t[0]:.6f}", f"{t[1]:.6f}"])
    print(f"prediction -> {out}")
    return 0


def cmd_plan(cfg, args) -> int:
    """Hybrid A* on a projected octree map file."""
    octree = OctreeMap.load(_require(Path(args.map), "map"))
    grid = octree.project_2d(cfg.dataset.z_min, cfg.dataset.z_max)
    prims = motion_primitives(kinematic_params(cfg), cfg.world.speed)
    plan = hybrid_astar(grid, tuple(args.start), tuple(args.goal), prims,
                        PlannerConfig(footprint_radius=cfg.world.footprint_radius))
    out = Path(args.output) if args.output else _out(cfg) / "plan.csv"
    plan.to_csv(out)
    print(f"plan: {len(plan.poses)} poses, cost {plan.cost:.3f} m -> {out}")
    return 0


def _scenarios(cfg, ds: Dataset) -> dict:
    index_path = Path(cfg.out) / "logs" / "index.json"
    kinds = {}
    if index_path.exists():
        kinds = {e["run_id"]: e["kind"] for e in json.loads(index_path.read_text())}
    groups = {}
    for s in ds.test:
        groups.setdefault(kinds.get(s.run_id, "all"), []).append(s)
    return groups


def baseline_config(cfg) -> BaselineConfig:
    w = cfg.world
    return BaselineConfig(step_length=w.speed * w.dt * cfg.dataset.step, speed=w.speed,
                          footprint_radius=w.footprint_radius, params=kinematic_params(cfg))


def cmd_bench(cfg, args) -> int:
    ds = _load_dataset(cfg)
    out = _out(cfg)
    bc = BenchConfig(tuple(cfg.bench.methods), str(out / HEAD_FILES["classification"]),
                     str(out / HEAD_FILES["regression"]), baseline_config(cfg), str(out))
    records = run_benchmark(_scenarios(cfg, ds), ds.grid_spec, bc)
    for r in records:
        print(f"{r.scenario:>8} {r.method:>13}  rmse {r.rmse:.3f}  e_x {r.mean_ex:.3f}/{r.max_ex:.3f}  "
              f"e_y {r.mean_ey:.3f}/{r.max_ey:.3f}")
    if "octopath" in cfg.bench.methods and ds.test:
        params, spec = _checkpoint_for(cfg, "classification")
        rep = latency_bench(params, spec, ds.test[0], ds.grid_spec, cfg.bench.latency_trials)
        (out / "latency.json").write_text(rep.to_json())
        print(f"latency median {rep.median_ms:.2f} ms, p95 {rep.p95_ms:.2f} ms, "
              f"{rep.paths_per_second:.1f} paths/s")
    return 0


def cmd_sweep(cfg, args) -> int:
    """Resolution x hidden size grid: one row per cell with held-out RMSE and training time."""
    logs = _load_logs(cfg)
    out = _out(cfg)
    rows = []
    for res in cfg.sweep.resolutions:
        cells = max(1, int(round(cfg.sweep.extent / res)))
        g = GridSpec(cells, cells, res)
        ds, _ = build_dataset(_with_grid(cfg, g), logs, g)
        for hidden in cfg.sweep.hidden_sizes:
            spec = ModelSpec.for_grid(g.width, g.height, cfg.dataset.tau_i, cfg.dataset.tau_o,
                                      hidden_dim=int(hidden), embed_dim=cfg.model.embed_dim)
            t0 = time.process_time()
            result = train(ds.train, spec, train_config(cfg, "classification", cfg.sweep.epochs), val_samples=ds.val)
            elapsed = time.process_time() - t0
            test = ds.test or ds.val or ds.train
            pred = predict_batch(result.params, spec, test, g)
            gt = np.stack([s.future for s in test])
            rmse = float(np.sqrt(((pred - gt) ** 2).sum(-1).mean(-1)).mean())
            rows.append((res, int(hidden), rmse, elapsed, result.curve[-1][1]))
            print(f"resolution {res} hidden {hidden}: rmse {rmse:.3f} m, train {elapsed:.1f} s")
    with open(out / "sweep.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["resolution", "hidden", "rmse", "train_seconds", "final_train_nll"])
        for r in rows:
            w.writerow([r[0], r[1], f"{r[2]:.6f}", f"{r[3]:.2f}", f"{r[4]:.6f}"])
    return 0


def _with_grid(cfg, g: GridSpec):
    c = copy.deepcopy(cfg)
    c.grid.width, c.grid.height, c.grid.resolution = g.width, g.height, g.resolution
    return c


def cmd_map_build(cfg, args) -> int:
    """Point-cloud files (x y z per line) -> octree file; every point counts as a hit."""
    m = cfg.map
    octree = create_map(m.origin, m.side_length, cfg.grid.resolution,
                        SensorFusionParams(max_range=cfg.world.max_range))
    for path in args.points:
        pts = load_points(_require(Path(path), "point cloud"))
        octree.integrate_scan(m.sensor, pts)
    out = Path(args.output) if args.output else _out(cfg) / "map.oct"
    octree.save(out)
    print(f"map with {octree.leaf_count} voxels -> {out}")
    return 0


def cmd_pipeline(cfg, args) -> int:
    for step in (cmd_simulate, cmd_dataset, cmd_train, cmd_bench):
        step(cfg, args)
    return 0


COMMANDS = {
    "simulate": cmd_simulate, "dataset": cmd_dataset, "train": cmd_train, "predict": cmd_predict,
    "plan": cmd_plan, "bench": cmd_bench, "sweep": cmd_sweep, "map-build": cmd_map_build,
    "pipeline": cmd_pipeline,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value config file")
    common.add_argument("--seed", type=int, help="global seed (overrides the config)")
    common.add_argument("--out", help="output directory (overrides the config)")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override one config key, e.g. --set train.epochs=10")
    common.add_argument("-v", "--verbose", action="store_true")
    p = argparse.ArgumentParser(prog="octonav", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("simulate", "dataset", "train", "bench", "sweep", "pipeline"):
        sub.add_parser(name, parents=[common])
    pr = sub.add_parser("predict", parents=[common])
    pr.add_argument("--log", required=True)
    pr.add_argument("--tick", type=int, required=True)
    pr.add_argument("--head", choices=("octopath", "regression"), default="octopath")
    pr.add_argument("--checkpoint")
    pr.add_argument("--beam", type=int, default=0)
    pr.add_argument("--output")
    pl = sub.add_parser("plan", parents=[common])
    pl.add_argument("--map", required=True)
    pl.add_argument("--start", type=float, nargs=3, required=True, metavar=("X", "Y", "THETA"))
    pl.add_argument("--goal", type=float, nargs=2, required=True, metavar=("X", "Y"))
    pl.add_argument("--output")
    mb = sub.add_parser("map-build", parents=[common])
    mb.add_argument("points", nargs="+")
    mb.add_argument("--output")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        overrides = list(args.set)
        if args.seed is not None:
            overrides.append(f"seed={args.seed}")
        if args.out is not None:
            overrides.append(f"out={args.out}")
        cfg = cfgmod.parse_config(args.config, overrides)
        return COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (OctonavError, OSError) as exc:
        print(f"{args.command} failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
