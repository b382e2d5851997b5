"""Binary checkpoint: magic, version, model spec, grid metadata, little-endian f64 parameters."""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ..errors import FormatError, InvalidSpec
from .model import HEADS, ModelSpec, param_shapes
from .training import AdamState

MAGIC = b"OPM1"
VERSION = 1
# magic, version, input_dim, hidden, n_classes, embed, tau_i, tau_o, head, layers,
# grid width, grid height, grid resolution, has_optimizer
_HEADER = struct.Struct("<4sBIIIIIIBIIIdB")


def to_bytes(params: dict, spec: ModelSpec, grid=None, optimizer: AdamState | None = None) -> bytes:
    """grid = (width, height, resolution) or None; optimizer moments are optional."""
    w, h, res = grid if grid is not None else (0, 0, 0.0)
    parts = [_HEADER.pack(MAGIC, VERSION, spec.input_dim, spec.hidden_dim, spec.n_classes, spec.embed_dim,
                          spec.tau_i, spec.tau_o, HEADS.index(spec.head), spec.n_layers, w, h, float(res),
                          int(optimizer is not None))]
    shapes = param_shapes(spec)
    for name, shape in shapes.items():
        a = np.asarray(params[name], dtype="<f8")
        if a.shape != shape:
            raise FormatError(f"{name}: shape {a.shape} does not match spec {shape}")
        parts.append(a.tobytes())
    if optimizer is not None:
        parts.append(struct.pack("<Q", optimizer.t))
        for moments in (optimizer.m, optimizer.v):
            for name in shapes:
                parts.append(np.asarray(moments[name], dtype="<f8").tobytes())
    return b"".join(parts)


def from_bytes(data: bytes):
    """Returns (params, spec, grid or None, optimizer or None)."""
    if len(data) < _HEADER.size:
        raise FormatError("checkpoint truncated")
    (magic, version, d, hdim, n, m, ti, to, head, layers, w, h, res, has_opt) = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    if head >= len(HEADS) or has_opt > 1:
        raise FormatError("corrupt checkpoint header")
    try:
        spec = ModelSpec(d, hdim, n, m, ti, to, HEADS[head], layers)
    except InvalidSpec as exc:
        raise FormatError(f"corrupt checkpoint header: {exc}") from exc
    shapes = param_shapes(spec)
    n_vals = sum(int(np.prod(s)) for s in shapes.values())
    expected = _HEADER.size + 8 * n_vals + (8 + 16 * n_vals if has_opt else 0)
    if len(data) != expected:
        raise FormatError(f"checkpoint has {len(data)} bytes, header implies {expected}")
    flat = np.frombuffer(data, dtype="<f8", count=n_vals, offset=_HEADER.size)

    def unpack(buf):
        out, pos = {}, 0
        for name, shape in shapes.items():
            k = int(np.prod(shape))
            out[name] = buf[pos:pos + k].reshape(shape).astype(np.float64)
            pos += k
        return out

    params = unpack(flat)
    if not all(np.all(np.isfinite(v)) for v in params.values()):
        raise FormatError("non-finite parameter values")
    optimizer = None
    if has_opt:
        off = _HEADER.size + 8 * n_vals
        (t,) = struct.unpack_from("<Q", data, off)
        rest = np.frombuffer(data, dtype="<f8", count=2 * n_vals, offset=off + 8)
        optimizer = AdamState(unpack(rest[:n_vals]), unpack(rest[n_vals:]), int(t))
    grid = (w, h, res) if w else None
    return params, spec, grid, optimizer


def save(path, params: dict, spec: ModelSpec, grid=None, optimizer: AdamState | None = None) -> None:
    Path(path).write_bytes(to_bytes(params, spec, grid, optimizer))


def load(path):
    return from_bytes(Path(path).read_bytes())
