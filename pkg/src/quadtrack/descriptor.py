"""Appearance-geometry descriptors (AGD) and their GRU estimates (EAGD)."""

from __future__ import annotations

from typing import NamedTuple, Sequence

import numpy as np

from . import tensor_core as tc
from .errors import ShapeError, UsageError
from .geometry import Quad, homography_from_quad, validate_quad
from .recurrent import gru_step, gru_step_array
from .tensor_core import ParameterSet, Tensor, bilinear_sample_array

APPEARANCE_SIZE = 128
GEOMETRY_SIZE = 8
AGD_SIZE = APPEARANCE_SIZE + GEOMETRY_SIZE
ROI_W, ROI_H = 64, 8
HEAD_CHANNELS = (32, 64, 128)
EMBED_HIDDEN = 16

DESCRIPTOR_MODES = ("appearance", "geometry", "agd")


class Eagd(NamedTuple):
    descriptor: Tensor
    hidden: Tensor


# --------------------------------------------------------------------------
# appearance head


def init_appearance_head(in_channels: int, seed: int = 0, channels=HEAD_CHANNELS,
                         dtype=np.float32) -> ParameterSet:
    """He-normal 3x3 kernels, zero biases."""
    rng = np.random.default_rng(seed)
    ps = ParameterSet()
    c_in = in_channels
    for k, c_out in enumerate(channels, start=1):
        std = np.sqrt(2.0 / (c_in * 9))
        ps.add(f"conv{k}_w", Tensor(rng.normal(0.0, std, (c_out, c_in, 3, 3)), dtype=dtype))
        ps.add(f"conv{k}_b", Tensor(np.zeros(c_out), dtype=dtype))
        c_in = c_out
    return ps


def zero_appearance_head(in_channels: int, channels=HEAD_CHANNELS) -> ParameterSet:
    ps = ParameterSet()
    c_in = in_channels
    for k, c_out in enumerate(channels, start=1):
        ps.add(f"conv{k}_w", tc.zeros((c_out, c_in, 3, 3)))
        ps.add(f"conv{k}_b", tc.zeros((c_out,)))
        c_in = c_out
    return ps


def roi_patches(fmap: np.ndarray, quads: Sequence[Quad], scale: float = 1.0,
                out_w: int = ROI_W, out_h: int = ROI_H) -> np.ndarray:
    """Warp each quad's region of a [C x H x W] map to [N x C x out_h x out_w].

    ``scale`` converts image coordinates of the quads to map coordinates.
    """
    vs, us = np.mgrid[0:out_h, 0:out_w].astype(np.float64)
    patches = np.empty((len(quads), fmap.shape[0], out_h, out_w), dtype=fmap.dtype)
    for n, q in enumerate(quads):
        H = homography_from_quad(q.pts / scale, out_w, out_h)
        xs, ys = H.apply_grid(us, vs)
        patches[n] = bilinear_sample_array(fmap, xs, ys)
    return patches


def appearance_head_forward(patches: np.ndarray, p: ParameterSet) -> np.ndarray:
    """Three relu convs then global average pooling: [N x C x h x w] -> [N x 128]."""
    x = np.ascontiguousarray(patches.transpose(0, 2, 3, 1))
    k = 1
    while f"conv{k}_w" in p:
        x = tc.conv2d_nhwc(x, p[f"conv{k}_w"].data, p[f"conv{k}_b"].data)
        np.maximum(x, 0, out=x)
        k += 1
    return x.mean(axis=(1, 2), dtype=np.float64).astype(patches.dtype)


def appearance_feature(feature_map, q: Quad, p: ParameterSet, scale: float = 1.0) -> Tensor:
    """128-d appearance vector of one quad over a [C x H x W] feature map."""
    fmap = tc.as_tensor(feature_map)
    if fmap.data.ndim != 3:
        raise ShapeError(f"feature map must be [C x H x W], got {fmap.shape}")
    validate_quad(q.pts)
    out = appearance_head_forward(roi_patches(fmap.data, [q], scale), p)
    return Tensor._wrap(out[0])


def appearance_features(feature_map, quads: Sequence[Quad], p: ParameterSet,
                        scale: float = 1.0) -> np.ndarray:
    """Batched :func:`appearance_feature`: returns [N x 128]."""
    fmap = tc.as_tensor(feature_map)
    if not quads:
        return np.zeros((0, p["conv3_b"].shape[0]), dtype=np.float32)
    return appearance_head_forward(roi_patches(fmap.data, quads, scale), p)


# --------------------------------------------------------------------------
# geometry embedding


def init_geometry_embed(seed: int = 0, hidden: int = EMBED_HIDDEN, out: int = GEOMETRY_SIZE,
                        dtype=np.float32) -> ParameterSet:
    rng = np.random.default_rng(seed)
    ps = ParameterSet()
    ps.add("fc1_w", Tensor(rng.normal(0, np.sqrt(2.0 / 8), (hidden, 8)), dtype=dtype))
    ps.add("fc1_b", Tensor(np.zeros(hidden), dtype=dtype))
    ps.add("fc2_w", Tensor(rng.normal(0, np.sqrt(1.0 / hidden), (out, hidden)), dtype=dtype))
    ps.add("fc2_b", Tensor(np.zeros(out), dtype=dtype))
    return ps


def zero_geometry_embed(hidden: int = EMBED_HIDDEN, out: int = GEOMETRY_SIZE) -> ParameterSet:
    return ParameterSet([
        ("fc1_w", tc.zeros((hidden, 8))), ("fc1_b", tc.zeros((hidden,))),
        ("fc2_w", tc.zeros((out, hidden))), ("fc2_b", tc.zeros((out,))),
    ])


def normalized_coords(q: Quad, frame_w: float, frame_h: float) -> np.ndarray:
    """(x0/W, y0/H, ..., x3/W, y3/H) in canonical vertex order."""
    if frame_w <= 0 or frame_h <= 0:
        raise UsageError(f"frame dims must be positive, got {frame_w}x{frame_h}")
    return (q.pts / np.array([frame_w, frame_h])).reshape(-1)


def geometry_embed(g: Tensor, p: ParameterSet) -> Tensor:
    """FC2(relu(FC1(g))) on [8] or a column batch [8 x B]; differentiable."""
    hdn = tc.relu(tc.add_bias(tc.matmul(p["fc1_w"], g), p["fc1_b"]))
    return tc.add_bias(tc.matmul(p["fc2_w"], hdn), p["fc2_b"])


def geometry_feature(q: Quad, frame_w: float, frame_h: float, p: ParameterSet) -> Tensor:
    g = Tensor(normalized_coords(q, frame_w, frame_h), dtype=p["fc1_w"].dtype)
    return geometry_embed(g, p)


def geometry_features(quads: Sequence[Quad], frame_w: float, frame_h: float,
                      p: ParameterSet) -> np.ndarray:
    """Untracked batch: [N x 8]."""
    if not quads:
        return np.zeros((0, p["fc2_b"].shape[0]), dtype=np.float32)
    G = np.stack([normalized_coords(q, frame_w, frame_h) for q in quads], axis=1)
    return geometry_embed_array(G, p).T


def geometry_embed_array(G: np.ndarray, p: ParameterSet) -> np.ndarray:
    W1 = p["fc1_w"].data.astype(np.float64)
    W2 = p["fc2_w"].data.astype(np.float64)
    hdn = np.maximum(W1 @ G + p["fc1_b"].data.astype(np.float64)[:, None], 0)
    out = W2 @ hdn + p["fc2_b"].data.astype(np.float64)[:, None]
    return out.astype(p["fc2_w"].dtype)


# --------------------------------------------------------------------------
# descriptors


def make_agd(f_a, f_g, appearance_size: int = APPEARANCE_SIZE,
             geometry_size: int = GEOMETRY_SIZE) -> Tensor:
    """Concatenate appearance and geometry parts into one descriptor."""
    f_a = tc.as_tensor(f_a)
    f_g = tc.as_tensor(f_g)
    if f_a.shape[0] != appearance_size or f_g.shape[0] != geometry_size:
        raise ShapeError(
            f"AGD parts must be {appearance_size} + {geometry_size} wide, got {f_a.shape} + {f_g.shape}"
        )
    return tc.concat([f_a, f_g], axis=0)


def select_part(agd: np.ndarray, mode: str, appearance_size: int = APPEARANCE_SIZE) -> np.ndarray:
    """Restrict descriptors (last axis) to the part used by a descriptor mode."""
    if mode == "agd":
        return agd
    if mode == "appearance":
        return agd[..., :appearance_size]
    if mode == "geometry":
        return agd[..., appearance_size:]
    raise UsageError(f"unknown descriptor mode {mode!r}; expected one of {DESCRIPTOR_MODES}")


def estimate_eagd(agd, h_prev, mask: int, p: ParameterSet) -> Eagd:
    """GRU estimate of the next-frame descriptor; ``mask=0`` starts fresh.

    With ``mask=0`` the previous hidden state is never read.
    """
    if mask not in (0, 1):
        raise UsageError(f"mask must be 0 or 1, got {mask}")
    agd = tc.as_tensor(agd)
    if mask == 0:
        h_in = tc.zeros(h_prev.shape if h_prev is not None else (p["b_z"].shape[0],),
                        dtype=agd.dtype)
    else:
        h_in = tc.as_tensor(h_prev)
    out, h = gru_step(agd, h_in, p)
    return Eagd(out, h)


def estimate_eagd_batch(agds: np.ndarray, h_prev: np.ndarray, mask: np.ndarray,
                        p: ParameterSet) -> np.ndarray:
    """Row-wise batch for inference: [N x D] descriptors -> [N x D] EAGDs."""
    agds = np.asarray(agds)
    if agds.shape[0] == 0:
        return np.zeros((0, p["b_z"].shape[0]), dtype=np.float32)
    mask = np.asarray(mask).reshape(-1, 1)
    h_in = np.where(mask == 1, np.asarray(h_prev), 0.0)
    return gru_step_array(agds.T, h_in.T, p).T
