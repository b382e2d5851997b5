"""Adam, minibatch training with best-validation selection, and sample-level prediction."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from ..dataset import GridSpec, SampleSequence, cell_centers_ego, to_global
from ..errors import EmptyDataset, HeadMismatch, ShapeError
from .model import (ModelSpec, batch_loss, beam_decode, forward_batch, greedy_decode, init_params, log_softmax,
                    loss_and_grads, regress, sequence_log_prob, teacher_inputs)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 3e-4
    epochs: int = 200
    batch_size: int = 32
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    teacher_forcing: bool = True

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")


@dataclass
class AdamState:
    m: dict
    v: dict
    t: int = 0

    @classmethod
    def zeros(cls, params: dict) -> "AdamState":
        return cls({k: np.zeros_like(p) for k, p in params.items()},
                   {k: np.zeros_like(p) for k, p in params.items()}, 0)


def adam_step(params: dict, grads: dict, state: AdamState, config: TrainConfig):
    """One bias-corrected Adam update; returns new (params, state) and leaves inputs untouched."""
    t = state.t + 1
    b1, b2 = config.beta1, config.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    new_p, new_m, new_v = {}, {}, {}
    for k, p in params.items():
        g = grads[k]
        if g.shape != p.shape:
            raise ShapeError(f"gradient for {k} has shape {g.shape}, expected {p.shape}")
        m = b1 * state.m[k] + (1.0 - b1) * g
        v = b2 * state.v[k] + (1.0 - b2) * (g * g)
        new_p[k] = p - config.learning_rate * (m / c1) / (np.sqrt(v / c2) + config.eps)
        new_m[k], new_v[k] = m, v
    return new_p, AdamState(new_m, new_v, t)


# ---------------------------------------------------------------- features --
def sample_inputs(windows: np.ndarray, ref_window: np.ndarray, tau_i: int, tau_o: int) -> np.ndarray:
    """Encoder inputs (tau_i + 1, cells + 2 + 2 tau_o).

    Row t holds the flattened window and that tick's route point; the last row
    additionally carries the future route points.
    """
    T = tau_i + 1
    if windows.shape[0] != T or ref_window.shape != (tau_i + tau_o + 1, 2):
        raise ShapeError("windows / ref_window do not match tau_i, tau_o")
    cells = windows[0].size
    X = np.zeros((T, cells + 2 + 2 * tau_o))
    X[:, :cells] = windows.reshape(T, cells)
    X[:, cells:cells + 2] = ref_window[:T]
    X[-1, cells + 2:] = ref_window[T:].reshape(-1)
    return X


def stack_inputs(samples, spec: ModelSpec) -> np.ndarray:
    X = np.stack([sample_inputs(s.windows, s.ref_window, spec.tau_i, spec.tau_o) for s in samples])
    if X.shape[2] != spec.input_dim:
        raise ShapeError(f"samples give input_dim {X.shape[2]}, spec expects {spec.input_dim}")
    return X


def stack_targets(samples, spec: ModelSpec) -> np.ndarray:
    if spec.head == "classification":
        return np.stack([np.asarray(s.labels, dtype=np.int64) for s in samples])
    return np.stack([s.future_ego() for s in samples])


# ---------------------------------------------------------------- training --
@dataclass
class TrainResult:
    params: dict
    curve: list = field(default_factory=list)  # (epoch, train_loss, val_loss or nan)
    best_epoch: int = 0
    optimizer: AdamState | None = None

    def write_curve(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "train_nll", "val_nll"])
            for e, tr, va in self.curve:
                w.writerow([e, repr(float(tr)), repr(float(va))])


def _eval_loss(params, spec, X, Y, chunk=256) -> float:
    total = 0.0
    for a in range(0, len(X), chunk):
        total += batch_loss(params, spec, X[a:a + chunk], Y[a:a + chunk]) * len(X[a:a + chunk])
    return total / len(X)


def train(train_samples, spec: ModelSpec, config: TrainConfig, val_samples=None, params=None,
          callback=None) -> TrainResult:
    """Minibatch Adam with teacher forcing; keeps the parameters with the best validation loss.

    Without a validation set the best running-mean training loss selects the checkpoint.
    """
    train_samples = list(train_samples)
    if not train_samples:
        raise EmptyDataset("training split is empty")
    X = stack_inputs(train_samples, spec)
    Y = stack_targets(train_samples, spec)
    Xv = Yv = None
    if val_samples:
        Xv = stack_inputs(val_samples, spec)
        Yv = stack_targets(val_samples, spec)
    rng = np.random.default_rng(config.seed)
    if params is None:
        params = init_params(spec, int(rng.integers(2 ** 31)))
    state = AdamState.zeros(params)
    best = (math.inf, params, 0)
    curve = []
    n = len(X)
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n)
        total = 0.0
        for a in range(0, n, config.batch_size):
            idx = order[a:a + config.batch_size]
            y_prev = None
            if not config.teacher_forcing and spec.head == "classification":
                cls, _ = greedy_decode(params, spec, X[idx])
                y_prev = teacher_inputs(spec, cls)
            loss, grads = loss_and_grads(params, spec, X[idx], Y[idx], y_prev)
            params, state = adam_step(params, grads, state, config)
            total += loss * len(idx)
        train_loss = total / n
        val_loss = _eval_loss(params, spec, Xv, Yv) if Xv is not None else math.nan
        curve.append((epoch, train_loss, val_loss))
        score = val_loss if Xv is not None else train_loss
        if score < best[0]:
            best = (score, params, epoch)
        if callback is not None:
            callback(epoch, train_loss, val_loss)
    return TrainResult(best[1], curve, best[2], state)


# -------------------------------------------------------------- prediction --
@dataclass
class PredictionResult:
    distributions: np.ndarray | None  # (tau_o, n_classes) or None for regression
    classes: np.ndarray | None
    points: np.ndarray                # (tau_o, 2) global frame
    ego_points: np.ndarray            # (tau_o, 2) anchor frame
    log_prob: float = math.nan


def predict(params: dict, spec: ModelSpec, windows, ref_window, anchor, grid: GridSpec,
            decode: str | tuple = "greedy") -> PredictionResult:
    """Predict tau_o future positions for one input sequence.

    decode is "greedy" or ("beam", B). Classes decode to global cell centres.
    """
    X = sample_inputs(np.asarray(windows), np.asarray(ref_window, dtype=float), spec.tau_i, spec.tau_o)
    if X.shape[1] != spec.input_dim:
        raise ShapeError(f"input_dim {X.shape[1]} does not match spec {spec.input_dim}")
    if spec.head == "regression":
        ego = regress(params, spec, X[None])[0]
        return PredictionResult(None, None, to_global(ego, anchor), ego)
    if grid.n_classes != spec.n_classes:
        raise ShapeError("grid spec does not match the model's class count")
    cls, logp = greedy_decode(params, spec, X[None])
    cls, logp = cls[0], logp[0]
    if decode != "greedy":
        kind, width = decode
        if kind != "beam":
            raise ValueError(f"unknown decode mode {decode!r}")
        cls, _ = beam_decode(params, spec, X, int(width))
        out, _ = forward_batch(params, spec, X[None], teacher_inputs(spec, cls[None]))
        logp = log_softmax(out)[0]
    ego = cell_centers_ego(cls, grid)
    lp = float(np.take_along_axis(logp, cls[:, None], axis=1).sum())
    return PredictionResult(np.exp(logp), cls, to_global(ego, anchor), ego, lp)


def predict_batch(params: dict, spec: ModelSpec, samples, grid: GridSpec, chunk: int = 256) -> np.ndarray:
    """Greedy / regression predictions for many samples: (n, tau_o, 2) global points."""
    out = []
    for a in range(0, len(samples), chunk):
        part = samples[a:a + chunk]
        X = stack_inputs(part, spec)
        if spec.head == "classification":
            cls, _ = greedy_decode(params, spec, X)
            ego = [cell_centers_ego(c, grid) for c in cls]
        else:
            ego = list(regress(params, spec, X))
        out.extend(to_global(e, s.anchor_pose) for s, e in zip(part, ego))
    return np.array(out).reshape(len(samples), spec.tau_o, 2)


def forward(params: dict, spec: ModelSpec, sample: SampleSequence, teacher_forcing: bool = False):
    """Per-step distributions for one sample (classification head)."""
    if spec.head != "classification":
        raise HeadMismatch("forward returns class distributions; use forward_regression")
    X = sample_inputs(sample.windows, sample.ref_window, spec.tau_i, spec.tau_o)[None]
    if teacher_forcing:
        out, _ = forward_batch(params, spec, X, teacher_inputs(spec, np.asarray(sample.labels)[None]))
        logp = log_softmax(out)[0]
    else:
        _, logp = greedy_decode(params, spec, X)
        logp = logp[0]
    return np.exp(logp)


def forward_regression(params: dict, spec: ModelSpec, sample: SampleSequence) -> np.ndarray:
    if spec.head != "regression":
        raise HeadMismatch("forward_regression needs a regression head")
    X = sample_inputs(sample.windows, sample.ref_window, spec.tau_i, spec.tau_o)[None]
    return regress(params, spec, X)[0]


def nll_loss(distributions, labels) -> float:
    """Mean over steps of -ln max(p(label), 1e-12)."""
    p = np.asarray(distributions, dtype=float)
    y = np.asarray(labels, dtype=np.int64)
    if p.shape[0] != y.shape[0]:
        raise ShapeError("distributions and labels differ in length")
    pl = np.maximum(p[np.arange(len(y)), y], 1e-12)
    return float(-np.log(pl).mean())


__all__ = ["TrainConfig", "AdamState", "adam_step", "train", "TrainResult", "predict", "predict_batch",
           "PredictionResult", "sample_inputs", "stack_inputs", "stack_targets", "forward", "forward_regression",
           "nll_loss", "sequence_log_prob"]
