"""Trajectory error metrics, multi-method benchmarking and inference latency measurement."""
from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .dataset import GridSpec, SampleSequence, to_global
from .errors import InvalidGoal, InvalidStart, MissingArtifact, NoPath, ShapeError
from .grid import Grid2D
from .kinematics import KinematicParams
from .planners import PlannerConfig, hybrid_astar, motion_primitives
from .seq2seq import checkpoint
from .seq2seq.model import ModelSpec
from .seq2seq.training import predict, predict_batch

METHODS = ("octopath", "regression", "hybrid_astar", "oracle")


def _pair(pred, gt):
    p = np.asarray(pred, dtype=float)
    g = np.asarray(gt, dtype=float)
    if p.shape != g.shape or p.ndim != 2 or p.shape[1] != 2 or len(p) < 1:
        raise ShapeError(f"trajectories must both be (n >= 1, 2), got {p.shape} and {g.shape}")
    return p, g


def rmse(pred, gt) -> float:
    p, g = _pair(pred, gt)
    return math.sqrt(float(((p - g) ** 2).sum(axis=1).mean()))


def axis_errors(pred, gt) -> tuple[float, float, float, float]:
    """(mean e_x, max e_x, mean e_y, max e_y) with absolute per-step errors."""
    p, g = _pair(pred, gt)
    e = np.abs(p - g)
    return float(e[:, 0].mean()), float(e[:, 0].max()), float(e[:, 1].mean()), float(e[:, 1].max())


@dataclass
class MetricsRecord:
    scenario: str
    method: str
    mean_ex: float
    max_ex: float
    mean_ey: float
    max_ey: float
    rmse: float
    step_mean: list = field(default_factory=list)
    step_std: list = field(default_factory=list)
    n_windows: int = 0


def aggregate(scenario: str, method: str, preds: np.ndarray, gts: np.ndarray) -> MetricsRecord:
    """Pool errors over all evaluation windows: preds, gts (n, tau_o, 2)."""
    preds = np.asarray(preds, dtype=float)
    gts = np.asarray(gts, dtype=float)
    if preds.shape != gts.shape or preds.ndim != 3:
        raise ShapeError("predictions and ground truth must both be (n, tau_o, 2)")
    e = np.abs(preds - gts)
    dist = np.hypot(e[..., 0], e[..., 1])
    per_window = np.sqrt((dist ** 2).mean(axis=1))
    return MetricsRecord(scenario, method, float(e[..., 0].mean()), float(e[..., 0].max()),
                         float(e[..., 1].mean()), float(e[..., 1].max()), float(per_window.mean()),
                         dist.mean(axis=0).tolist(), dist.std(axis=0).tolist(), len(preds))


# --------------------------------------------------------------- baselines --
@dataclass(frozen=True)
class BaselineConfig:
    step_length: float = 0.5
    speed: float = 1.0
    n_curvatures: int = 5
    primitive_duration: float = 0.4
    footprint_radius: float = 0.4
    max_expansions: int = 20_000
    params: KinematicParams = field(default_factory=lambda: KinematicParams(0.165, 0.35, 9.0))


def plan_sample(sample: SampleSequence, grid: GridSpec, cfg: BaselineConfig, stats: dict | None = None):
    """Hybrid A* on the anchor's ego window toward the last reference point.

    The plan is read off at step_length spacing. If no plan exists the
    reference points themselves are returned.
    """
    tau_o = len(sample.labels)
    window = Grid2D((0.0, -grid.height * grid.resolution / 2.0), grid.resolution, sample.windows[-1])
    goal = sample.ref_window[-1]
    prims = motion_primitives(cfg.params, cfg.speed, cfg.n_curvatures, cfg.primitive_duration)
    pc = PlannerConfig(footprint_radius=cfg.footprint_radius, max_expansions=cfg.max_expansions)
    try:
        plan = hybrid_astar(window, (0.0, 0.0, 0.0), goal, prims, pc)
        ego = plan.points_at(cfg.step_length * np.arange(1, tau_o + 1))
        outcome = "planned"
    except (NoPath, InvalidGoal, InvalidStart):
        ego = sample.ref_window[-tau_o:]
        outcome = "fallback"
    if stats is not None:
        stats[outcome] = stats.get(outcome, 0) + 1
    return to_global(ego, sample.anchor_pose)


# --------------------------------------------------------------- benchmark --
@dataclass
class BenchConfig:
    methods: tuple = ("octopath", "regression", "hybrid_astar")
    octopath_checkpoint: str | None = None
    regression_checkpoint: str | None = None
    baseline: BaselineConfig = field(default_factory=BaselineConfig)
    out_dir: str | None = None


def _load_model(path, head):
    if path is None or not Path(path).exists():
        raise MissingArtifact(f"{head} checkpoint not found: {path}")
    params, spec, _, _ = checkpoint.load(path)
    if spec.head != head:
        raise ShapeError(f"checkpoint {path} holds a {spec.head} head, expected {head}")
    return params, spec


def run_benchmark(scenarios: dict, grid: GridSpec, config: BenchConfig) -> list[MetricsRecord]:
    """scenarios maps an id to held-out samples; one record per scenario and method."""
    unknown = [m for m in config.methods if m not in METHODS]
    if unknown:
        raise ValueError(f"unknown methods {unknown}")
    models = {}
    if "octopath" in config.methods:
        models["octopath"] = _load_model(config.octopath_checkpoint, "classification")
    if "regression" in config.methods:
        models["regression"] = _load_model(config.regression_checkpoint, "regression")
    records = []
    for scenario in sorted(scenarios):
        samples = list(scenarios[scenario])
        if not samples:
            continue
        gts = np.stack([s.future for s in samples])
        for method in config.methods:
            if method == "oracle":
                preds = gts.copy()
            elif method == "hybrid_astar":
                preds = np.stack([plan_sample(s, grid, config.baseline) for s in samples])
            else:
                params, spec = models[method]
                preds = predict_batch(params, spec, samples, grid)
            records.append(aggregate(scenario, method, preds, gts))
    if config.out_dir is not None:
        write_report(records, config.out_dir)
    return records


REPORT_COLUMNS = ("scenario", "method", "mean_ex", "max_ex", "mean_ey", "max_ey", "rmse")


def _fmt(v: float) -> str:
    return f"{v:.6f}"


def report_csv(records) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_COLUMNS)
    for r in records:
        w.writerow([r.scenario, r.method] + [_fmt(getattr(r, c)) for c in REPORT_COLUMNS[2:]])
    return buf.getvalue()


def error_curve_csv(records) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("scenario", "timestep", "mean", "std", "method"))
    for r in records:
        for k, (m, s) in enumerate(zip(r.step_mean, r.step_std), 1):
            w.writerow([r.scenario, k, _fmt(m), _fmt(s), r.method])
    return buf.getvalue()


_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def error_curve_svg(records, title: str = "position error per prediction step") -> str:
    """Mean line and +-1 std band per method, pooled over scenarios by window count."""
    by_method = {}
    for r in records:
        if not r.step_mean:
            continue
        acc = by_method.setdefault(r.method, [])
        acc.append(r)
    W, H, pad = 640, 400, 50
    series = {}
    for method, recs in by_method.items():
        n = np.array([r.n_windows for r in recs], dtype=float)
        mean = np.array([r.step_mean for r in recs])
        std = np.array([r.step_std for r in recs])
        m = (n[:, None] * mean).sum(0) / n.sum()
        second = (n[:, None] * (std ** 2 + mean ** 2)).sum(0) / n.sum()
        series[method] = (m, np.sqrt(np.maximum(second - m ** 2, 0.0)))
    ymax = max([float((m + s).max()) for m, s in series.values()] + [1e-6]) * 1.1
    steps = max([len(m) for m, _ in series.values()] + [1])

    def xy(k, v):
        x = pad + (W - 2 * pad) * (k - 1) / max(steps - 1, 1)
        y = H - pad - (H - 2 * pad) * v / ymax
        return f"{x:.2f},{y:.2f}"

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
           f'<rect width="{W}" height="{H}" fill="white"/>',
           f'<text x="{W / 2:.0f}" y="24" text-anchor="middle" font-family="sans-serif" font-size="14">{title}</text>',
           f'<line x1="{pad}" y1="{H - pad}" x2="{W - pad}" y2="{H - pad}" stroke="black"/>',
           f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{H - pad}" stroke="black"/>',
           f'<text x="{W / 2:.0f}" y="{H - 12}" text-anchor="middle" font-family="sans-serif" font-size="12">'
           f'prediction step</text>',
           f'<text x="14" y="{H / 2:.0f}" font-family="sans-serif" font-size="12" '
           f'transform="rotate(-90 14 {H / 2:.0f})" text-anchor="middle">error [m]</text>',
           f'<text x="{pad - 6}" y="{pad + 4}" text-anchor="end" font-family="sans-serif" font-size="10">'
           f'{ymax:.2f}</text>']
    for idx, (method, (m, s)) in enumerate(sorted(series.items())):
        col = _COLORS[idx % len(_COLORS)]
        ks = range(1, len(m) + 1)
        upper = [xy(k, v) for k, v in zip(ks, m + s)]
        lower = [xy(k, max(v, 0.0)) for k, v in zip(ks, m - s)]
        out.append(f'<polygon points="{" ".join(upper + lower[::-1])}" fill="{col}" fill-opacity="0.15"/>')
        out.append(f'<polyline points="{" ".join(xy(k, v) for k, v in zip(ks, m))}" fill="none" '
                   f'stroke="{col}" stroke-width="2"/>')
        out.append(f'<text x="{W - pad + 4}" y="{pad + 16 * idx}" font-family="sans-serif" font-size="11" '
                   f'fill="{col}">{method}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_report(records, out_dir) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"report": out / "report.csv", "curve": out / "error_curve.csv", "svg": out / "error_curve.svg"}
    paths["report"].write_text(report_csv(records))
    paths["curve"].write_text(error_curve_csv(records))
    paths["svg"].write_text(error_curve_svg(records))
    return paths


# ----------------------------------------------------------------- latency --
@dataclass
class LatencyReport:
    samples_ms: list
    min_ms: float
    median_ms: float
    p95_ms: float
    paths_per_second: float
    n_trials: int

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2) + "\n"


def latency_bench(params: dict, spec: ModelSpec, sample: SampleSequence, grid: GridSpec, n_trials: int = 100,
                  warmup: int = 5, decode="greedy") -> LatencyReport:
    """Wall time of single-sample predict calls; warmup calls are not recorded."""
    if n_trials < 10:
        raise ValueError("n_trials must be >= 10")
    call = lambda: predict(params, spec, sample.windows, sample.ref_window, sample.anchor_pose, grid, decode)
    for _ in range(warmup):
        call()
    times = []
    for _ in range(n_trials):
        t0 = time.perf_counter()
        call()
        times.append((time.perf_counter() - t0) * 1000.0)
    arr = np.array(times)
    median = float(np.median(arr))
    return LatencyReport(times, float(arr.min()), median, float(np.percentile(arr, 95)),
                         1000.0 / median if median > 0 else math.inf, n_trials)
