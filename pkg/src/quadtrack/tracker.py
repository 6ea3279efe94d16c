"""Online trajectory generation.

Per frame: distance matrix between each active tracklet's reference
descriptor (its GRU estimate, or its last observed descriptor when
``matching="agd"``) and the current proposals' descriptors; thresholded
Kuhn-Munkres matching; tracklet update with a log-length confidence
reward; spawning of confident unmatched proposals; retirement of tracklets
unmatched for too long; and finally the GRU advance that produces the next
frame's estimates.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .assignment import kuhn_munkres
from .descriptor import estimate_eagd_batch
from .errors import ShapeError, UsageError
from .geometry import Quad
from .tensor_core import ParameterSet

MATCHING_MODES = ("eagd", "agd")


@dataclass
class TrackerConfig:
    theta_l: float = 0.4     # detection threshold
    theta_m: float = 1.0     # max matching distance
    theta_h: float = 0.8     # spawn threshold
    tau: float = 0.05        # log-length reward coefficient
    top_k: int = 10
    max_missed: int = 8
    matching: str = "eagd"

    def __post_init__(self):
        if not 0.0 <= self.theta_l <= self.theta_h <= 1.0:
            raise UsageError(f"need 0 <= theta_l <= theta_h <= 1, got {self.theta_l}, {self.theta_h}")
        if not self.theta_m > 0:
            raise UsageError(f"theta_m must be > 0, got {self.theta_m}")
        if self.tau < 0:
            raise UsageError(f"tau must be >= 0, got {self.tau}")
        if self.top_k < 1:
            raise UsageError(f"top_k must be >= 1, got {self.top_k}")
        if self.max_missed < 0:
            raise UsageError(f"max_missed must be >= 0, got {self.max_missed}")
        if self.matching not in MATCHING_MODES:
            raise UsageError(f"matching must be one of {MATCHING_MODES}, got {self.matching!r}")


@dataclass
class Tracklet:
    id: int
    history: list[tuple[int, Quad, float]]
    agd: np.ndarray
    eagd: np.ndarray | None = None
    h: np.ndarray | None = None
    missed: int = 0

    def __len__(self):
        return len(self.history)

    @property
    def last_frame(self) -> int:
        return self.history[-1][0]


@dataclass
class TrackerState:
    active: list[Tracklet] = field(default_factory=list)
    retired: list[Tracklet] = field(default_factory=list)
    next_id: int = 1
    frame: int = 0


@dataclass(frozen=True)
class Confirmed:
    """One entry of a frame's confirmed detections."""

    frame: int
    track_id: int
    quad: Quad
    score: float


def similarity_matrix(eagd_prev, agd_cur) -> np.ndarray:
    """Euclidean distance between every row of ``eagd_prev`` and ``agd_cur``."""
    A = np.asarray(eagd_prev, dtype=np.float64)
    B = np.asarray(agd_cur, dtype=np.float64)
    if A.size == 0 or B.size == 0:
        return np.zeros((len(A), len(B)))
    A = A.reshape(len(A), -1)
    B = B.reshape(len(B), -1)
    if A.shape[1] != B.shape[1]:
        raise ShapeError(f"descriptor widths differ: {A.shape[1]} vs {B.shape[1]}")
    d2 = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * A @ B.T
    # the expansion can cancel to tiny negatives; recompute those pairs exactly
    near = d2 < 1e-6 * (1.0 + (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :])
    if near.any():
        ii, jj = np.nonzero(near)
        diff = A[ii] - B[jj]
        d2[ii, jj] = (diff * diff).sum(1)
    return np.sqrt(np.maximum(d2, 0.0))


def reward(score: float, length: int, tau: float) -> float:
    """``clamp(score + tau * ln(length), 0, 1)``."""
    return min(1.0, max(0.0, score + tau * math.log(length)))


def step(detections: Sequence[Quad], agd_cur, state: TrackerState, cfg: TrackerConfig,
         gru: ParameterSet | None = None,
         timings: dict[str, float] | None = None) -> tuple[list[Confirmed], TrackerState]:
    """Advance ``state`` by one frame (in place) and return confirmed detections.

    ``detections`` are the frame's NMS-filtered, top-K scored quads and
    ``agd_cur`` their descriptors, row-aligned.  ``gru`` is required in
    ``eagd`` matching mode.  ``timings``, if given, accumulates seconds
    under ``"matching"`` (distances + assignment) and ``"update"``.
    """
    agd_cur = np.asarray(agd_cur, dtype=np.float32)
    n = len(detections)
    if n == 0:
        agd_cur = agd_cur.reshape(0, agd_cur.shape[-1] if agd_cur.ndim == 2 else 0)
    if agd_cur.ndim != 2 or agd_cur.shape[0] != n:
        raise UsageError(f"{n} detections but descriptor array of shape {agd_cur.shape}")
    if n > cfg.top_k:
        raise UsageError(f"{n} detections exceed top_k={cfg.top_k}")
    if cfg.matching == "eagd" and gru is None:
        raise UsageError("eagd matching needs GRU parameters")
    scores = []
    for q in detections:
        if q.score is None:
            raise UsageError("detections must carry scores")
        scores.append(q.score)

    t0 = time.perf_counter()
    frame = state.frame
    active = state.active
    if active and n:
        refs = np.stack([t.eagd if cfg.matching == "eagd" else t.agd for t in active])
        cost = similarity_matrix(refs, agd_cur)
        pairs = kuhn_munkres(cost, cfg.theta_m)
    else:
        pairs = []
    t1 = time.perf_counter()

    matched_track = {i for i, _ in pairs}
    matched_det = {j for _, j in pairs}
    updated: list[Tracklet] = []
    gru_rows: list[int] = []
    gru_masks: list[int] = []

    for i, j in pairs:
        t = active[i]
        # hidden state carries over only from an observation in the previous frame
        seen_last_frame = t.last_frame == frame - 1
        length = len(t.history) + 1
        t.history.append((frame, detections[j].with_score(None), reward(scores[j], length, cfg.tau)))
        t.missed = 0
        t.agd = agd_cur[j]
        updated.append(t)
        gru_rows.append(j)
        gru_masks.append(1 if seen_last_frame else 0)

    spawned: list[Tracklet] = []
    for j in range(n):
        if j in matched_det or scores[j] < cfg.theta_h:
            continue
        t = Tracklet(state.next_id, [(frame, detections[j].with_score(None), float(scores[j]))], agd_cur[j])
        state.next_id += 1
        spawned.append(t)
        gru_rows.append(j)
        gru_masks.append(0)

    survivors = []
    for i, t in enumerate(active):
        if i in matched_track:
            survivors.append(t)
            continue
        t.missed += 1
        if t.missed > cfg.max_missed:
            state.retired.append(t)
        else:
            survivors.append(t)

    touched = updated + spawned
    if cfg.matching == "eagd" and touched:
        d = gru["b_z"].shape[0]
        h_prev = np.stack([t.h if (m == 1 and t.h is not None) else np.zeros(d, np.float32)
                           for t, m in zip(touched, gru_masks)])
        out = estimate_eagd_batch(agd_cur[gru_rows], h_prev, np.array(gru_masks), gru)
        for t, row in zip(touched, out):
            t.eagd = row
            t.h = row

    state.active = survivors + spawned
    state.frame = frame + 1
    confirmed = [Confirmed(frame, t.id, t.history[-1][1], t.history[-1][2]) for t in touched]
    confirmed.sort(key=lambda c: c.track_id)
    if timings is not None:
        timings["matching"] = timings.get("matching", 0.0) + (t1 - t0)
        timings["update"] = timings.get("update", 0.0) + (time.perf_counter() - t1)
    return confirmed, state


class Tracker:
    """Convenience wrapper holding config, state and GRU parameters."""

    def __init__(self, cfg: TrackerConfig | None = None, gru: ParameterSet | None = None):
        self.cfg = cfg or TrackerConfig()
        self.gru = gru
        self.state = TrackerState()

    def update(self, detections: Sequence[Quad], agd_cur,
               timings: dict[str, float] | None = None) -> list[Confirmed]:
        confirmed, self.state = step(detections, agd_cur, self.state, self.cfg, self.gru, timings)
        return confirmed

    def all_tracklets(self) -> list[Tracklet]:
        return sorted(self.state.active + self.state.retired, key=lambda t: t.id)
