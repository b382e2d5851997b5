"""Gated recurrent encoder-decoder over ego windows with a cell-classification or regression head.

Row-vector convention throughout: a batch of inputs x (B, in) maps through a
weight W (in, out) as x @ W.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import HeadMismatch, InvalidClass, InvalidSpec, ShapeError

HEADS = ("classification", "regression")
PROB_FLOOR = 1e-12
LOG_FLOOR = math.log(PROB_FLOOR)

ENC_NAMES = ("U_xz", "U_xr", "U_xh", "U_hz", "U_hr", "U_rh", "b_z", "b_r", "b_h")
DEC_NAMES = ("U_yz", "U_yr", "U_ys", "U_sz", "U_sr", "U_rs", "C_cz", "C_cr", "C_cs", "b_z", "b_r", "b_s")


@dataclass(frozen=True)
class ModelSpec:
    input_dim: int
    hidden_dim: int = 64
    n_classes: int = 1600
    embed_dim: int = 32
    tau_i: int = 4
    tau_o: int = 10
    head: str = "classification"
    n_layers: int = 1

    def __post_init__(self):
        for name in ("input_dim", "hidden_dim", "n_classes", "embed_dim", "tau_o", "n_layers"):
            if int(getattr(self, name)) < 1:
                raise InvalidSpec(f"{name} must be >= 1")
        if self.tau_i < 0:
            raise InvalidSpec("tau_i must be >= 0")
        if self.head not in HEADS:
            raise InvalidSpec(f"unknown head {self.head!r}")

    @property
    def n_steps(self) -> int:
        return self.tau_i + 1

    @classmethod
    def for_grid(cls, width: int, height: int, tau_i: int = 4, tau_o: int = 10, **kw) -> "ModelSpec":
        """Input = window cells + one route point + the future route points slot."""
        return cls(input_dim=width * height + 2 + 2 * tau_o, n_classes=width * height,
                   tau_i=tau_i, tau_o=tau_o, **kw)


def param_shapes(spec: ModelSpec) -> dict:
    """Parameter names and shapes in the declared (serialization) order."""
    H, M = spec.hidden_dim, spec.embed_dim
    shapes = {}
    for layer in range(spec.n_layers):
        d = spec.input_dim if layer == 0 else H
        for n, s in zip(ENC_NAMES, [(d, H)] * 3 + [(H, H)] * 3 + [(H,)] * 3):
            shapes[f"enc{layer}.{n}"] = s
    for n, s in zip(DEC_NAMES, [(M, H)] * 3 + [(H, H)] * 6 + [(H,)] * 3):
        shapes[f"dec.{n}"] = s
    if spec.head == "classification":
        shapes["E"] = (spec.n_classes + 1, M)
        out = spec.n_classes
    else:
        shapes["E_pt"] = (2, M)
        shapes["e_start"] = (M,)
        out = 2
    shapes["U_s"] = (H, M)
    shapes["U_c"] = (H, M)
    shapes["U_o"] = (M, out)
    shapes["b_o"] = (out,)
    return shapes


def init_params(spec: ModelSpec, seed: int = 0, zero: bool = False) -> dict:
    """Uniform +-sqrt(6 / (fan_in + fan_out)) weights and zero biases, drawn in declared order."""
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape in param_shapes(spec).items():
        if zero or len(shape) == 1 or name == "e_start":
            params[name] = np.zeros(shape)
        else:
            lim = math.sqrt(6.0 / (shape[0] + shape[1]))
            params[name] = rng.uniform(-lim, lim, size=shape)
    return params


def check_params(params: dict, spec: ModelSpec) -> None:
    shapes = param_shapes(spec)
    if list(params) != list(shapes):
        raise ShapeError("parameter names do not match the model spec")
    for name, shape in shapes.items():
        if params[name].shape != shape:
            raise ShapeError(f"{name}: expected {shape}, got {params[name].shape}")


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def log_softmax(o):
    m = o.max(axis=-1, keepdims=True)
    z = o - m
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


# ----------------------------------------------------------------- encoder --
def _gru_forward(xw, h0, Uh_z, Uh_r, U_rh):
    """Run one gated layer given precomputed input projections xw (B, T, 3H) incl. biases."""
    B, T, H3 = xw.shape
    H = H3 // 3
    h = h0
    hs, zs, rs, cs = [], [], [], []
    for t in range(T):
        a = xw[:, t]
        z = sigmoid(a[:, :H] + h @ Uh_z)
        r = sigmoid(a[:, H:2 * H] + h @ Uh_r)
        c = np.tanh(a[:, 2 * H:] + (r * h) @ U_rh)
        h_new = (1.0 - z) * h + z * c
        hs.append(h)
        zs.append(z)
        rs.append(r)
        cs.append(c)
        h = h_new
    return h, (hs, zs, rs, cs)


def _gru_backward(dh_last, dh_seq, cache, Uh_z, Uh_r, U_rh):
    """Back-propagate through one gated layer.

    dh_seq (B, T, H) holds external gradients on each step's output (or None).
    Returns pre-activation gradients A (B, T, 3H), the recurrent weight
    gradients and the gradient w.r.t. the initial state.
    """
    hs, zs, rs, cs = cache
    T = len(hs)
    B, H = hs[0].shape
    A = np.empty((B, T, 3 * H), dtype=dh_last.dtype)
    dUz = np.zeros_like(Uh_z)
    dUr = np.zeros_like(Uh_r)
    dUrh = np.zeros_like(U_rh)
    dh = dh_last
    for t in range(T - 1, -1, -1):
        if dh_seq is not None:
            dh = dh + dh_seq[:, t]
        h, z, r, c = hs[t], zs[t], rs[t], cs[t]
        a_c = dh * z * (1.0 - c * c)
        a_z = dh * (c - h) * z * (1.0 - z)
        rh = r * h
        drh = a_c @ U_rh.T
        a_r = drh * h * r * (1.0 - r)
        dUrh += rh.T @ a_c
        dUz += h.T @ a_z
        dUr += h.T @ a_r
        dh = dh * (1.0 - z) + drh * r + a_z @ Uh_z.T + a_r @ Uh_r.T
        A[:, t, :H] = a_z
        A[:, t, H:2 * H] = a_r
        A[:, t, 2 * H:] = a_c
    return A, dUz, dUr, dUrh, dh


def _enc_input_weights(params, layer):
    p = f"enc{layer}."
    W = np.concatenate([params[p + "U_xz"], params[p + "U_xr"], params[p + "U_xh"]], axis=1)
    b = np.concatenate([params[p + "b_z"], params[p + "b_r"], params[p + "b_h"]])
    return W, b


def encode_batch(params: dict, spec: ModelSpec, X: np.ndarray):
    """X (B, T, input_dim) -> context (B, H) and per-layer caches."""
    if X.ndim != 3 or X.shape[2] != spec.input_dim:
        raise ShapeError(f"encoder input must be (B, T, {spec.input_dim}), got {X.shape}")
    B, T, _ = X.shape
    H = spec.hidden_dim
    seq = X
    caches = []
    for layer in range(spec.n_layers):
        p = f"enc{layer}."
        W, b = _enc_input_weights(params, layer)
        xw = (seq.reshape(B * T, -1) @ W).reshape(B, T, 3 * H) + b
        h, cache = _gru_forward(xw, np.zeros((B, H), dtype=X.dtype), params[p + "U_hz"], params[p + "U_hr"],
                                params[p + "U_rh"])
        caches.append((seq, cache))
        hs = cache[0][1:] + [h]
        seq = np.stack(hs, axis=1)
    return seq[:, -1], caches


def encode(params: dict, inputs) -> tuple[np.ndarray, np.ndarray]:
    """Single-sequence encoder: (context, hidden states of the top layer (T, H))."""
    spec = spec_from_params(params)
    X = np.asarray(inputs, dtype=float)
    if X.ndim != 2:
        raise ShapeError("inputs must be (T, input_dim)")
    c, caches = encode_batch(params, spec, X[None])
    seq, cache = caches[-1]
    hs = np.stack(cache[0][1:] + [c], axis=1)[0]
    return c[0], hs


# ----------------------------------------------------------------- decoder --
def _dec_gates(params, c):
    Cc = np.concatenate([params["dec.C_cz"], params["dec.C_cr"], params["dec.C_cs"]], axis=1)
    b = np.concatenate([params["dec.b_z"], params["dec.b_r"], params["dec.b_s"]])
    return c @ Cc + b


def _dec_embed_weights(params):
    return np.concatenate([params["dec.U_yz"], params["dec.U_yr"], params["dec.U_ys"]], axis=1)


def _dec_cell(e_proj, cw, s, params):
    """One decoder recurrence step given embedding and context projections."""
    H = s.shape[1]
    z = sigmoid(e_proj[:, :H] + cw[:, :H] + s @ params["dec.U_sz"])
    r = sigmoid(e_proj[:, H:2 * H] + cw[:, H:2 * H] + s @ params["dec.U_sr"])
    c = np.tanh(e_proj[:, 2 * H:] + cw[:, 2 * H:] + (r * s) @ params["dec.U_rs"])
    return (1.0 - z) * s + z * c, (z, r, c)


def _embed(params, spec, y_prev):
    """Decoder input embeddings for previous outputs (B, tau_o) ints or (B, tau_o, 2) points."""
    if spec.head == "classification":
        return params["E"][y_prev]
    e = y_prev @ params["E_pt"]
    e[:, 0] = params["e_start"]
    return e


def forward_batch(params: dict, spec: ModelSpec, X: np.ndarray, y_prev: np.ndarray):
    """Teacher-forced forward pass; returns output pre-activations (B, tau_o, out) and a cache."""
    c, enc_caches = encode_batch(params, spec, X)
    B = X.shape[0]
    H = spec.hidden_dim
    E = _embed(params, spec, y_prev)
    T = E.shape[1]
    EW = (E.reshape(B * T, -1) @ _dec_embed_weights(params)).reshape(B, T, 3 * H)
    cw = _dec_gates(params, c)
    s = np.zeros((B, H), dtype=X.dtype)
    ss, gates, prev = [], [], []
    for k in range(T):
        prev.append(s)
        s, g = _dec_cell(EW[:, k], cw, s, params)
        ss.append(s)
        gates.append(g)
    S = np.stack(ss, axis=1)
    Q = E + S @ params["U_s"] + (c @ params["U_c"])[:, None, :]
    out = Q @ params["U_o"] + params["b_o"]
    cache = (X, c, enc_caches, y_prev, E, prev, gates, S, Q)
    return out, cache


def backward_batch(params: dict, spec: ModelSpec, dout: np.ndarray, cache) -> dict:
    X, c, enc_caches, y_prev, E, prev, gates, S, Q = cache
    B, T, _ = dout.shape
    H = spec.hidden_dim
    g = {name: np.zeros_like(v) for name, v in params.items()}
    g["U_o"] = Q.reshape(B * T, -1).T @ dout.reshape(B * T, -1)
    g["b_o"] = dout.sum(axis=(0, 1))
    dQ = dout @ params["U_o"].T
    g["U_s"] = S.reshape(B * T, H).T @ dQ.reshape(B * T, -1)
    dQsum = dQ.sum(axis=1)
    g["U_c"] = c.T @ dQsum
    dc = dQsum @ params["U_c"].T
    dE = dQ.copy()
    dS_ext = dQ @ params["U_s"].T

    # decoder recurrence, same structure as the encoder cells
    A = np.empty((B, T, 3 * H), dtype=dout.dtype)
    ds = np.zeros((B, H), dtype=dout.dtype)
    for k in range(T - 1, -1, -1):
        ds = ds + dS_ext[:, k]
        s, (z, r, cc) = prev[k], gates[k]
        a_c = ds * z * (1.0 - cc * cc)
        a_z = ds * (cc - s) * z * (1.0 - z)
        drs = a_c @ params["dec.U_rs"].T
        a_r = drs * s * r * (1.0 - r)
        g["dec.U_rs"] += (r * s).T @ a_c
        g["dec.U_sz"] += s.T @ a_z
        g["dec.U_sr"] += s.T @ a_r
        ds = ds * (1.0 - z) + drs * r + a_z @ params["dec.U_sz"].T + a_r @ params["dec.U_sr"].T
        A[:, k, :H] = a_z
        A[:, k, H:2 * H] = a_r
        A[:, k, 2 * H:] = a_c
    A2 = A.reshape(B * T, 3 * H)
    dW = E.reshape(B * T, -1).T @ A2
    g["dec.U_yz"], g["dec.U_yr"], g["dec.U_ys"] = dW[:, :H], dW[:, H:2 * H], dW[:, 2 * H:]
    Asum = A.sum(axis=1)
    dC = c.T @ Asum
    g["dec.C_cz"], g["dec.C_cr"], g["dec.C_cs"] = dC[:, :H], dC[:, H:2 * H], dC[:, 2 * H:]
    g["dec.b_z"], g["dec.b_r"], g["dec.b_s"] = Asum[:, :H].sum(0), Asum[:, H:2 * H].sum(0), Asum[:, 2 * H:].sum(0)
    dc += Asum[:, :H] @ params["dec.C_cz"].T + Asum[:, H:2 * H] @ params["dec.C_cr"].T \
        + Asum[:, 2 * H:] @ params["dec.C_cs"].T
    dE += (A2 @ _dec_embed_weights(params).T).reshape(B, T, -1)
    if spec.head == "classification":
        np.add.at(g["E"], y_prev.reshape(-1), dE.reshape(B * T, -1))
    else:
        g["e_start"] = dE[:, 0].sum(axis=0)
        g["E_pt"] = y_prev[:, 1:].reshape(-1, 2).T @ dE[:, 1:].reshape(-1, dE.shape[2])

    # encoder, top layer first
    dh_last = dc
    dh_seq = None
    for layer in range(spec.n_layers - 1, -1, -1):
        p = f"enc{layer}."
        seq, gcache = enc_caches[layer]
        A, dUz, dUr, dUrh, _ = _gru_backward(dh_last, dh_seq, gcache, params[p + "U_hz"],
                                             params[p + "U_hr"], params[p + "U_rh"])
        g[p + "U_hz"], g[p + "U_hr"], g[p + "U_rh"] = dUz, dUr, dUrh
        Tn = A.shape[1]
        A2 = A.reshape(B * Tn, 3 * H)
        dW = seq.reshape(B * Tn, -1).T @ A2
        g[p + "U_xz"], g[p + "U_xr"], g[p + "U_xh"] = dW[:, :H], dW[:, H:2 * H], dW[:, 2 * H:]
        Asum = A2.sum(axis=0)
        g[p + "b_z"], g[p + "b_r"], g[p + "b_h"] = Asum[:H], Asum[H:2 * H], Asum[2 * H:]
        if layer > 0:
            W, _ = _enc_input_weights(params, layer)
            # lower layer's output at step t is this layer's input at step t
            dh_seq = (A2 @ W.T).reshape(B, Tn, H)
            dh_last = np.zeros((B, H), dtype=dh_seq.dtype)
    return g


# ------------------------------------------------------------------ losses --
def nll_from_logits(logits: np.ndarray, labels: np.ndarray):
    """Mean over batch and steps of -ln max(p(label), 1e-12), and its logit gradient."""
    logp = log_softmax(logits)
    B, T, N = logits.shape
    lp = np.take_along_axis(logp, labels[..., None], axis=2)[..., 0]
    active = lp >= LOG_FLOOR
    loss = float(-np.where(active, lp, LOG_FLOOR).mean())
    grad = np.exp(logp)
    np.put_along_axis(grad, labels[..., None], np.take_along_axis(grad, labels[..., None], axis=2) - 1.0, axis=2)
    grad *= (active / (B * T))[..., None]
    return loss, grad


def mse_from_outputs(out: np.ndarray, targets: np.ndarray):
    """Mean over batch and steps of the squared Euclidean error, and its gradient."""
    B, T, _ = out.shape
    diff = out - targets
    return float((diff ** 2).sum(axis=2).mean()), 2.0 * diff / (B * T)


def teacher_inputs(spec: ModelSpec, targets: np.ndarray) -> np.ndarray:
    """Previous-output sequence for teacher forcing (start token / start slot first)."""
    if spec.head == "classification":
        start = np.full((targets.shape[0], 1), spec.n_classes, dtype=np.int64)
        return np.concatenate([start, targets[:, :-1]], axis=1)
    start = np.zeros((targets.shape[0], 1, 2), dtype=targets.dtype)
    return np.concatenate([start, targets[:, :-1]], axis=1)


def loss_and_grads(params: dict, spec: ModelSpec, X: np.ndarray, targets: np.ndarray, y_prev=None):
    """Mean loss (NLL or MSE) with teacher forcing and exact gradients for every parameter."""
    if y_prev is None:
        y_prev = teacher_inputs(spec, targets)
    out, cache = forward_batch(params, spec, X, y_prev)
    if spec.head == "classification":
        loss, dout = nll_from_logits(out, targets)
    else:
        loss, dout = mse_from_outputs(out, targets)
    return loss, backward_batch(params, spec, dout, cache)


def batch_loss(params: dict, spec: ModelSpec, X: np.ndarray, targets: np.ndarray) -> float:
    out, _ = forward_batch(params, spec, X, teacher_inputs(spec, targets))
    if spec.head == "classification":
        return nll_from_logits(out, targets)[0]
    return mse_from_outputs(out, targets)[0]


# ---------------------------------------------------------- step decoding --
def spec_from_params(params: dict) -> ModelSpec:
    """Recover a spec from parameter shapes (tau values are not encoded and default)."""
    layers = sum(1 for k in params if k.endswith(".U_xz"))
    d, H = params["enc0.U_xz"].shape
    M = params["U_s"].shape[1]
    if "E" in params:
        return ModelSpec(d, H, params["E"].shape[0] - 1, M, head="classification", n_layers=layers)
    return ModelSpec(d, H, 1, M, head="regression", n_layers=layers)


def decode_step(params: dict, y_prev: int, s_prev, c):
    """One classification decoder step: (distribution over classes, next hidden state).

    y_prev = n_classes selects the start token.
    """
    if "E" not in params:
        raise HeadMismatch("decode_step needs a classification head")
    N = params["E"].shape[0] - 1
    if int(y_prev) != y_prev or not (0 <= int(y_prev) <= N):
        raise InvalidClass(f"previous class {y_prev} outside [0, {N}]")
    s_prev = np.asarray(s_prev, dtype=float).reshape(1, -1)
    c = np.asarray(c, dtype=float).reshape(1, -1)
    e = params["E"][[int(y_prev)]]
    s, _ = _dec_cell(e @ _dec_embed_weights(params), _dec_gates(params, c), s_prev, params)
    q = e + s @ params["U_s"] + c @ params["U_c"]
    p = np.exp(log_softmax(q @ params["U_o"] + params["b_o"]))
    return p[0], s[0]


def greedy_decode(params: dict, spec: ModelSpec, X: np.ndarray):
    """Feed back per-step argmax; returns classes (B, tau_o) and log-probabilities (B, tau_o, N)."""
    c, _ = encode_batch(params, spec, X)
    B = X.shape[0]
    cw = _dec_gates(params, c)
    Wy = _dec_embed_weights(params)
    cu = c @ params["U_c"]
    s = np.zeros((B, spec.hidden_dim), dtype=X.dtype)
    y = np.full(B, spec.n_classes, dtype=np.int64)
    classes, logps = [], []
    for _ in range(spec.tau_o):
        e = params["E"][y]
        s, _ = _dec_cell(e @ Wy, cw, s, params)
        lp = log_softmax((e + s @ params["U_s"] + cu) @ params["U_o"] + params["b_o"])
        y = np.argmax(lp, axis=1)
        classes.append(y)
        logps.append(lp)
    return np.stack(classes, axis=1), np.stack(logps, axis=1)


def regress(params: dict, spec: ModelSpec, X: np.ndarray) -> np.ndarray:
    """Autoregressive regression rollout: (B, tau_o, 2) ego-frame points."""
    if spec.head != "regression":
        raise HeadMismatch("regression rollout needs a regression head")
    c, _ = encode_batch(params, spec, X)
    B = X.shape[0]
    cw = _dec_gates(params, c)
    Wy = _dec_embed_weights(params)
    cu = c @ params["U_c"]
    s = np.zeros((B, spec.hidden_dim), dtype=X.dtype)
    e = np.broadcast_to(params["e_start"], (B, spec.embed_dim))
    outs = []
    for _ in range(spec.tau_o):
        s, _ = _dec_cell(e @ Wy, cw, s, params)
        o = (e + s @ params["U_s"] + cu) @ params["U_o"] + params["b_o"]
        outs.append(o)
        e = o @ params["E_pt"]
    return np.stack(outs, axis=1)


def beam_search(params: dict, spec: ModelSpec, x: np.ndarray, width: int):
    """Plain beam search of one width for one input sequence x (T, D); returns (classes, log-prob)."""
    c, _ = encode_batch(params, spec, x[None])
    cw = _dec_gates(params, c)
    Wy = _dec_embed_weights(params)
    cu = c @ params["U_c"]
    N = spec.n_classes
    seqs = np.zeros((1, 0), dtype=np.int64)
    scores = np.zeros(1)
    s = np.zeros((1, spec.hidden_dim))
    y = np.array([N])
    for _ in range(spec.tau_o):
        e = params["E"][y]
        s, _ = _dec_cell(e @ Wy, np.repeat(cw, len(y), axis=0), s, params)
        lp = log_softmax((e + s @ params["U_s"] + cu) @ params["U_o"] + params["b_o"])
        total = (scores[:, None] + lp).reshape(-1)
        # highest score first; ties resolved by lower (beam, class) index
        order = np.lexsort((np.arange(total.size), -total))[:width]
        beam, cls = order // N, order % N
        seqs = np.concatenate([seqs[beam], cls[:, None]], axis=1)
        scores = total[order]
        s = s[beam]
        y = cls
    return seqs[0], float(scores[0])


def beam_decode(params: dict, spec: ModelSpec, x: np.ndarray, width: int):
    """Best sequence over beam widths 1..width (so the result never gets worse as width grows)."""
    if width < 1:
        raise ValueError("beam width must be >= 1")
    best, best_score = None, -math.inf
    for w in range(1, width + 1):
        seq, score = beam_search(params, spec, x, w)
        if score > best_score:
            best, best_score = seq, score
    return best, best_score


def sequence_log_prob(params: dict, spec: ModelSpec, x: np.ndarray, classes) -> float:
    """Total log-probability of a class sequence under the model."""
    y = np.asarray(classes, dtype=np.int64)[None]
    out, _ = forward_batch(params, spec, x[None], teacher_inputs(spec, y))
    lp = log_softmax(out)
    return float(np.take_along_axis(lp, y[..., None], axis=2).sum())
