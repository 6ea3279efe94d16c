"""Training objectives for detection and association.

Every loss returns a one-element :class:`Tensor`; when an input is tracked
by a tape the loss is recorded as a single fused op with an analytic
gradient.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import tensor_core as tc
from .errors import GeometryError, ShapeError, UsageError
from .tensor_core import Tensor

DICE_EPS = 1e-6


@dataclass(frozen=True)
class LossWeights:
    alpha: float = 5.0   # offset term weight in the detection loss
    beta: float = 0.1    # tracking term weight in the multi-task loss
    margin: float = 1.0  # contrastive margin

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise UsageError(f"alpha and beta must be >= 0, got {self.alpha}, {self.beta}")
        if self.margin <= 0:
            raise UsageError(f"margin must be > 0, got {self.margin}")


def dice_loss(pred, gt, eps: float = DICE_EPS) -> Tensor:
    """``1 - 2 sum(pred*gt) / (sum(pred) + sum(gt) + eps)``."""
    pred = tc.as_tensor(pred)
    gt = tc.as_tensor(gt)
    if pred.shape != gt.shape:
        raise ShapeError(f"dice_loss: pred {pred.shape} and gt {gt.shape} differ")
    P = pred.data.astype(np.float64)
    G = gt.data.astype(np.float64)
    inter = float(np.sum(P * G))
    denom = float(P.sum() + G.sum() + eps)
    out = np.array([1.0 - 2.0 * inter / denom], dtype=pred.dtype)

    def vjp(g):
        gp = -2.0 * (G * denom - inter) / denom ** 2
        gg = -2.0 * (P * denom - inter) / denom ** 2
        return (g[0] * gp).astype(pred.dtype), (g[0] * gg).astype(gt.dtype)

    return tc.record_composite("dice", [pred, gt], out, vjp)


def smooth_l1(d: np.ndarray) -> np.ndarray:
    a = np.abs(d)
    return np.where(a < 1.0, 0.5 * d * d, a - 0.5)


def smooth_l1_offsets(pred, gt, norm) -> Tensor:
    """Mean smooth-L1 of ``(pred - gt) / norm`` over [8 x P] entries.

    ``norm`` holds one positive scale per positive pixel (column).
    """
    pred = tc.as_tensor(pred)
    gt = tc.as_tensor(gt)
    nrm = np.asarray(norm.data if isinstance(norm, Tensor) else norm, dtype=np.float64).reshape(-1)
    if pred.shape != gt.shape or pred.data.ndim != 2:
        raise ShapeError(f"smooth_l1_offsets: pred {pred.shape} and gt {gt.shape} must be equal [8 x P]")
    if nrm.shape[0] != pred.shape[1]:
        raise ShapeError(f"norm has {nrm.shape[0]} entries for {pred.shape[1]} pixels")
    if np.any(nrm <= 0):
        raise GeometryError("offset normaliser must be positive (degenerate GT quad)")
    d = (pred.data.astype(np.float64) - gt.data.astype(np.float64)) / nrm[None, :]
    count = d.size
    out = np.array([smooth_l1(d).sum() / count], dtype=pred.dtype)

    def vjp(g):
        dd = np.where(np.abs(d) < 1.0, d, np.sign(d)) / nrm[None, :] / count * g[0]
        return dd.astype(pred.dtype), (-dd).astype(gt.dtype)

    return tc.record_composite("smooth_l1", [pred, gt], out, vjp)


def _scalar(x, dtype=np.float32) -> Tensor:
    t = tc.as_tensor(x, dtype=dtype)
    if t.data.size != 1:
        raise ShapeError(f"expected a scalar loss term, got shape {t.shape}")
    return tc.reshape(t, (1,))


def detection_loss(cls_term, off_term, w: LossWeights = LossWeights()) -> Tensor:
    """``L_cls + alpha * L_off``."""
    c = _scalar(cls_term)
    o = _scalar(off_term, c.dtype)
    return tc.add(c, tc.scale(o, w.alpha))


def check_pair_labels(y: np.ndarray, shape=None) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    if y.ndim != 2:
        raise ShapeError(f"pair labels must be a matrix, got shape {y.shape}")
    if shape is not None and y.shape != tuple(shape):
        raise ShapeError(f"pair labels {y.shape} do not match descriptor counts {tuple(shape)}")
    if not np.all((y == 0) | (y == 1)):
        raise UsageError("pair labels must be 0/1")
    if np.any(y.sum(axis=0) > 1) or np.any(y.sum(axis=1) > 1):
        raise UsageError("pair labels allow at most one positive per row and column")
    return y


def contrastive_track_loss(eagd_prev, agd_cur, y, w: LossWeights = LossWeights()) -> Tensor:
    """Contrastive loss over all pairs of previous estimates and current descriptors.

    ``eagd_prev`` is [P x D], ``agd_cur`` is [Q x D] (one descriptor per
    row), ``y`` is the [P x Q] 0/1 pair label matrix.  The sum over all
    P*Q pairs is divided by P*Q (K^2 when both sides hold K items).
    """
    A_t = tc.as_tensor(eagd_prev)
    B_t = tc.as_tensor(agd_cur)
    if A_t.data.ndim == 1:
        A_t = tc.reshape(A_t, (1, -1))
    if B_t.data.ndim == 1:
        B_t = tc.reshape(B_t, (1, -1))
    if A_t.shape[1] != B_t.shape[1]:
        raise ShapeError(f"descriptor widths differ: {A_t.shape[1]} vs {B_t.shape[1]}")
    Y = check_pair_labels(y, (A_t.shape[0], B_t.shape[0]))
    A = A_t.data.astype(np.float64)
    B = B_t.data.astype(np.float64)
    m = w.margin
    diff = A[:, None, :] - B[None, :, :]
    d2 = np.einsum("pqd,pqd->pq", diff, diff)
    d = np.sqrt(d2)
    hinge = np.maximum(m - d, 0.0)
    n = Y.size
    out = np.array([np.sum(Y * d2 + (1 - Y) * hinge * hinge) / n], dtype=A_t.dtype)

    def vjp(g):
        safe = np.where(d > 0, d, 1.0)
        c = np.where(Y == 1, 2.0, np.where(d > 0, -2.0 * hinge / safe, 0.0)) / n * g[0]
        ga = c.sum(axis=1)[:, None] * A - c @ B
        gb = c.sum(axis=0)[:, None] * B - c.T @ A
        return ga.astype(A_t.dtype), gb.astype(B_t.dtype)

    return tc.record_composite("contrastive", [A_t, B_t], out, vjp)


def total_loss(det_losses: Sequence, track_losses: Sequence, w: LossWeights = LossWeights()) -> Tensor:
    """Per-frame mean of ``L_det + beta * L_track``."""
    if len(det_losses) != len(track_losses):
        raise UsageError(f"{len(det_losses)} detection terms vs {len(track_losses)} tracking terms")
    if not det_losses:
        raise UsageError("total_loss needs at least one frame")
    acc = None
    for ld, lt in zip(det_losses, track_losses):
        d = _scalar(ld)
        term = tc.add(d, tc.scale(_scalar(lt, d.dtype), w.beta))
        acc = term if acc is None else tc.add(acc, term)
    return tc.scale(acc, 1.0 / len(det_losses))
