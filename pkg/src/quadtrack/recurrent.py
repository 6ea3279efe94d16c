"""GRU cell (differentiable) and ConvLSTM cell (forward only).

Both use the input-first concatenation ``[x; h]`` when applying the gate
weights, so a gate matrix is ``D x (D_in + D)``.  With the default
``D_in == D`` this coincides with any other ordering convention's shape.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor_core as tc
from .errors import ShapeError
from .tensor_core import ParameterSet, Tensor

DESCRIPTOR_SIZE = 136

GRU_NAMES = ("W_z", "W_r", "W_h", "b_z", "b_r", "b_h")
CONVLSTM_GATES = ("i", "f", "o", "c")


def init_gru(hidden: int = DESCRIPTOR_SIZE, inputs: int | None = None, seed: int = 0,
             scale: float | None = None, dtype=np.float32) -> ParameterSet:
    """Uniform(-s, s) weights with s = 1/sqrt(hidden), zero biases."""
    inputs = hidden if inputs is None else inputs
    rng = np.random.default_rng(seed)
    s = 1.0 / np.sqrt(hidden) if scale is None else scale
    ps = ParameterSet()
    for g in ("z", "r", "h"):
        ps.add(f"W_{g}", Tensor(rng.uniform(-s, s, (hidden, inputs + hidden)), dtype=dtype))
    for g in ("z", "r", "h"):
        ps.add(f"b_{g}", Tensor(np.zeros(hidden), dtype=dtype))
    return ps


def init_gru_identity(size: int = DESCRIPTOR_SIZE, seed: int = 0, update_bias: float = 3.0,
                      noise: float = 0.01, dtype=np.float32) -> ParameterSet:
    """GRU that starts out (approximately) passing its input through.

    Candidate input block = identity, update gate biased open, small noise
    elsewhere.  Used untrained, EAGD matching then behaves like AGD matching.
    """
    ps = init_gru(size, size, seed=seed, scale=noise, dtype=np.float64)
    out = ParameterSet()
    for name in GRU_NAMES:
        arr = ps[name].data.copy()
        if name == "W_h":
            arr[:, :size] += np.eye(size)
        elif name == "b_z":
            arr[:] = update_bias
        out.add(name, Tensor(arr, dtype=dtype))
    return out


def zero_gru(hidden: int = DESCRIPTOR_SIZE, inputs: int | None = None, dtype=np.float32) -> ParameterSet:
    inputs = hidden if inputs is None else inputs
    ps = ParameterSet()
    for g in ("z", "r", "h"):
        ps.add(f"W_{g}", tc.zeros((hidden, inputs + hidden), dtype=dtype))
    for g in ("z", "r", "h"):
        ps.add(f"b_{g}", tc.zeros((hidden,), dtype=dtype))
    return ps


def gru_sizes(p: ParameterSet) -> tuple[int, int]:
    """Return ``(hidden, inputs)`` implied by the parameter shapes."""
    d, total = p["W_z"].shape
    return d, total - d


def _check_gru(x: Tensor, h: Tensor, p: ParameterSet):
    d, d_in = gru_sizes(p)
    for name in ("W_z", "W_r", "W_h"):
        if p[name].shape != (d, d + d_in):
            raise ShapeError(f"GRU {name} must be {d}x{d + d_in}, got {p[name].shape}")
    for name in ("b_z", "b_r", "b_h"):
        if p[name].shape != (d,):
            raise ShapeError(f"GRU {name} must be [{d}], got {p[name].shape}")
    if x.shape[0] != d_in:
        raise ShapeError(f"GRU input has width {x.shape[0]}, parameters expect {d_in}")
    if h.shape[0] != d:
        raise ShapeError(f"GRU hidden state has width {h.shape[0]}, parameters expect {d}")
    if x.data.ndim != h.data.ndim or x.shape[1:] != h.shape[1:]:
        raise ShapeError(f"GRU input {x.shape} and hidden {h.shape} batch layouts differ")


def gru_step(x: Tensor, h_prev: Tensor, p: ParameterSet) -> tuple[Tensor, Tensor]:
    """One GRU update.

    ``x`` is [D_in] or a column batch [D_in x B]; ``h_prev`` matches with D
    rows.  Returns ``(out, h)`` where ``out`` is ``h`` itself.

        z  = sigmoid(W_z [x; h_prev] + b_z)
        r  = sigmoid(W_r [x; h_prev] + b_r)
        h~ = tanh(W_h [x; r * h_prev] + b_h)
        h  = (1 - z) * h_prev + z * h~
    """
    x = tc.as_tensor(x)
    h_prev = tc.as_tensor(h_prev)
    _check_gru(x, h_prev, p)
    xh = tc.concat([x, h_prev], axis=0)
    z = tc.sigmoid(tc.add_bias(tc.matmul(p["W_z"], xh), p["b_z"]))
    r = tc.sigmoid(tc.add_bias(tc.matmul(p["W_r"], xh), p["b_r"]))
    xrh = tc.concat([x, tc.mul(r, h_prev)], axis=0)
    cand = tc.tanh(tc.add_bias(tc.matmul(p["W_h"], xrh), p["b_h"]))
    h = tc.add(h_prev, tc.mul(z, tc.sub(cand, h_prev)))
    return h, h


_F64_CACHE: dict[tuple[int, ...], tuple[tuple[np.ndarray, ...], tuple[np.ndarray, ...]]] = {}


def _f64_weights(p: ParameterSet):
    """float64 ``(W_z;W_r stacked, W_h, b_z;b_r, b_h)``, cached per underlying arrays."""
    src = tuple(p[n].data for n in GRU_NAMES)
    key = tuple(id(a) for a in src)
    hit = _F64_CACHE.get(key)
    if hit is not None and all(a is b for a, b in zip(hit[0], src)):
        return hit[1]
    W_z, W_r, W_h, b_z, b_r, b_h = (a.astype(np.float64) for a in src)
    out = (np.concatenate([W_z, W_r]), W_h, np.concatenate([b_z, b_r])[:, None], b_h[:, None])
    if len(_F64_CACHE) >= 8:
        _F64_CACHE.clear()
    _F64_CACHE[key] = (src, out)
    return out


def gru_step_array(x: np.ndarray, h_prev: np.ndarray, p: ParameterSet) -> np.ndarray:
    """Untracked float64 fast path of :func:`gru_step` for inference.

    Column layout as in :func:`gru_step`.  Returns ``h`` rounded to the
    parameter dtype.
    """
    W_zr, W_h, b_zr, b_h = _f64_weights(p)
    d = W_h.shape[0]
    d_in = W_h.shape[1] - d
    x = np.asarray(x, dtype=np.float64)
    h_prev = np.asarray(h_prev, dtype=np.float64)
    if x.shape[0] != d_in or h_prev.shape[0] != d:
        raise ShapeError(f"GRU widths: input {x.shape}, hidden {h_prev.shape}, params {d_in}->{d}")
    col = x.ndim == 1
    if col:
        x, h_prev = x[:, None], h_prev[:, None]
    xh = np.concatenate([x, h_prev], axis=0)
    zr = _sigmoid(W_zr @ xh + b_zr)
    z, r = zr[:d], zr[d:]
    cand = np.tanh(W_h @ np.concatenate([x, r * h_prev], axis=0) + b_h)
    h = h_prev + z * (cand - h_prev)
    h = h.astype(p["W_z"].dtype)
    return h[:, 0] if col else h


def _sigmoid(a):
    e = np.exp(-np.abs(a))
    return np.where(a >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


# --------------------------------------------------------------------------
# ConvLSTM


@dataclass(frozen=True)
class ConvLstmState:
    c: Tensor
    h: Tensor

    @classmethod
    def zeros(cls, channels: int, height: int, width: int) -> "ConvLstmState":
        z = tc.zeros((channels, height, width))
        return cls(z, z)


def init_convlstm(in_channels: int, hidden_channels: int | None = None, kernel: int = 3,
                  seed: int = 0, dtype=np.float32) -> ParameterSet:
    """Gate kernels ``W_<g>``: [C_h x (C_in + C_h) x k x k], biases ``b_<g>``: [C_h].

    The forget-gate bias starts at 1.
    """
    hidden_channels = in_channels if hidden_channels is None else hidden_channels
    if kernel % 2 == 0:
        raise ShapeError(f"ConvLSTM kernel must be odd, got {kernel}")
    rng = np.random.default_rng(seed)
    fan_in = (in_channels + hidden_channels) * kernel * kernel
    s = 1.0 / np.sqrt(fan_in)
    ps = ParameterSet()
    for g in CONVLSTM_GATES:
        ps.add(f"W_{g}", Tensor(
            rng.uniform(-s, s, (hidden_channels, in_channels + hidden_channels, kernel, kernel)),
            dtype=dtype))
    for g in CONVLSTM_GATES:
        ps.add(f"b_{g}", Tensor(np.full(hidden_channels, 1.0 if g == "f" else 0.0), dtype=dtype))
    return ps


def convlstm_step(x: Tensor, s: ConvLstmState, p: ParameterSet) -> tuple[Tensor, ConvLstmState]:
    """One ConvLSTM update over a [C_in x H x W] map; returns ``(F, s')`` with ``F = h'``."""
    x = tc.as_tensor(x)
    if x.data.ndim != 3:
        raise ShapeError(f"ConvLSTM input must be [C x H x W], got {x.shape}")
    if s.c.shape != s.h.shape:
        raise ShapeError(f"ConvLSTM state c {s.c.shape} and h {s.h.shape} differ")
    if x.shape[1:] != s.h.shape[1:]:
        raise ShapeError(f"ConvLSTM input {x.shape} and state {s.h.shape} spatial dims differ")
    ch = s.h.shape[0]
    W = p["W_i"].data
    if W.shape[0] != ch or W.shape[1] != x.shape[0] + ch:
        raise ShapeError(
            f"ConvLSTM kernels {W.shape} do not fit input channels {x.shape[0]} / hidden {ch}"
        )
    xh = np.concatenate([x.data, s.h.data], axis=0)
    # all four gates in one convolution
    Wall = np.concatenate([p[f"W_{g}"].data for g in CONVLSTM_GATES], axis=0)
    ball = np.concatenate([p[f"b_{g}"].data for g in CONVLSTM_GATES], axis=0)
    pre = tc.conv2d_array(xh, Wall, ball).astype(np.float64)
    i = _sigmoid(pre[:ch])
    f = _sigmoid(pre[ch:2 * ch])
    o = _sigmoid(pre[2 * ch:3 * ch])
    g = np.tanh(pre[3 * ch:])
    c_new = f * s.c.data.astype(np.float64) + i * g
    h_new = o * np.tanh(c_new)
    dt = x.dtype
    h_t = Tensor._wrap(h_new.astype(dt))
    return h_t, ConvLstmState(Tensor._wrap(c_new.astype(dt)), h_t)
