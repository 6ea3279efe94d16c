"""End-to-end frame processing: ingest, optional ConvLSTM smoothing, decode,
NMS + top-K, descriptors, tracking.

Per-frame work that does not depend on tracker state (file reads, decode,
NMS and, without ConvLSTM, descriptor extraction) is prefetched by a worker
pool of ``QUADTRACK_THREADS`` threads.  The tracker consumes frames strictly
in order, so outputs do not depend on the thread count.
"""

from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np

from . import formats
from .config import RunConfig
from .descriptor import (APPEARANCE_SIZE, GEOMETRY_SIZE, appearance_features, geometry_features,
                         init_appearance_head, init_geometry_embed)
from .errors import DataError, ShapeError, UsageError
from .geometry import DetectionMaps, Quad, decode_arrays, nms_indices
from .recurrent import ConvLstmState, convlstm_step, gru_sizes, init_convlstm, init_gru_identity
from .tensor_core import ParameterSet, Tensor, read_tensor
from .tracker import Confirmed, Tracker

STAGES = ("load", "smooth", "decode", "nms", "descriptors", "matching", "update")
THREADS_ENV = "QUADTRACK_THREADS"


def thread_count() -> int:
    raw = os.environ.get(THREADS_ENV, "1").strip() or "1"
    try:
        n = int(raw)
    except ValueError:
        raise UsageError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    if n < 1:
        raise UsageError(f"{THREADS_ENV} must be >= 1, got {n}")
    return n


def descriptor_width(mode: str) -> int:
    return {"appearance": APPEARANCE_SIZE, "geometry": GEOMETRY_SIZE}.get(mode, APPEARANCE_SIZE + GEOMETRY_SIZE)


@dataclass
class Models:
    head: ParameterSet | None = None
    embed: ParameterSet | None = None
    gru: ParameterSet | None = None
    convlstm: ParameterSet | None = None


def _load_params(cfg: RunConfig, key: str) -> ParameterSet | None:
    p = cfg.resolve(key)
    return ParameterSet.load(p) if p is not None else None


def load_models(cfg: RunConfig, channels: int | None) -> Models:
    """Checkpointed parameters where configured, seeded initialisation otherwise."""
    m = Models(_load_params(cfg, "head_params"), _load_params(cfg, "embed_params"),
               _load_params(cfg, "gru_params"), _load_params(cfg, "convlstm_params"))
    needs_app = cfg.descriptor in ("appearance", "agd")
    if needs_app and m.head is None:
        if channels is None:
            raise UsageError("appearance descriptors need feature maps in the manifest")
        m.head = init_appearance_head(channels, seed=cfg.seed)
    if cfg.descriptor in ("geometry", "agd") and m.embed is None:
        m.embed = init_geometry_embed(seed=cfg.seed)
    width = descriptor_width(cfg.descriptor)
    if cfg.matching == "eagd-agd":
        if m.gru is None:
            m.gru = init_gru_identity(width, seed=cfg.seed)
        hidden, inputs = gru_sizes(m.gru)
        if hidden != width or inputs != width:
            raise ShapeError(f"GRU is {inputs}->{hidden} but {cfg.descriptor} descriptors are {width} wide")
    if cfg.use_convlstm and m.convlstm is None:
        if channels is None:
            raise UsageError("ConvLSTM smoothing needs feature maps in the manifest")
        m.convlstm = init_convlstm(channels, seed=cfg.seed)
    return m


@dataclass
class Prepared:
    """Everything about a frame that is independent of tracker state."""

    frame: int
    features: Tensor | None
    width: float
    height: float
    quads: list[Quad]
    descriptors: np.ndarray | None          # filled here unless ConvLSTM is on
    timings: dict[str, float] = field(default_factory=dict)


@dataclass
class FrameOutput:
    frame: int
    proposals: list[Quad]
    descriptors: np.ndarray
    confirmed: list[Confirmed]
    timings: dict[str, float]


def _read_qtns(path: str, what: str) -> Tensor:
    try:
        return read_tensor(path)
    except OSError as e:
        raise DataError(f"cannot read {what} {path}: {e}") from None


class Pipeline:
    def __init__(self, cfg: RunConfig, models: Models | None = None):
        self.cfg = cfg
        self.models = models
        self.tracker = Tracker(cfg.tracker_config())
        self._lstm_state: ConvLstmState | None = None

    # ---- stateless per-frame stages --------------------------------------

    def prepare(self, rec: formats.FrameRecord, smooth_later: bool) -> Prepared:
        cfg = self.cfg
        tm: dict[str, float] = {}
        t0 = time.perf_counter()
        feats = _read_qtns(rec.features, "feature map") if rec.features else None
        if feats is not None and feats.data.ndim != 3:
            raise DataError(f"{rec.features}: feature map must be [C x H x W], got {feats.shape}")
        maps = None
        if rec.maps:
            mt = _read_qtns(rec.maps, "detection maps")
            try:
                maps = DetectionMaps.from_stacked(mt)
            except ShapeError as e:
                raise DataError(f"{rec.maps}: {e}") from None
        dets = formats.read_detections(rec.detections).get(rec.frame, []) if rec.detections else None
        tm["load"] = time.perf_counter() - t0

        if maps is not None:
            height, width = maps.height * cfg.stride, maps.width * cfg.stride
        elif feats is not None:
            height, width = feats.shape[1] * cfg.stride, feats.shape[2] * cfg.stride
        else:
            raise DataError(f"frame {rec.frame}: needs a feature map or detection maps")

        t0 = time.perf_counter()
        if dets is not None:
            arr = np.array([q.pts for q in dets]).reshape(-1, 4, 2)
            scores = np.array([q.score for q in dets], dtype=np.float64)
            keep = scores >= cfg.theta_l
            arr, scores = arr[keep], scores[keep]
        elif maps is not None:
            arr, scores, _ = decode_arrays(maps, cfg.theta_l, cfg.stride)
        else:
            raise DataError(f"frame {rec.frame}: needs detection maps or a detections file")
        t1 = time.perf_counter()
        tm["decode"] = t1 - t0
        keep = nms_indices(arr, scores, cfg.nms_iou)[:cfg.top_k]
        quads = [Quad(arr[i], float(scores[i])) for i in keep]
        tm["nms"] = time.perf_counter() - t1

        p = Prepared(rec.frame, feats, float(width), float(height), quads, None, tm)
        if not smooth_later:
            p.descriptors = self.describe(p, feats)
        return p

    def describe(self, p: Prepared, fmap: Tensor | None) -> np.ndarray:
        t0 = time.perf_counter()
        mode = self.cfg.descriptor
        parts = []
        if mode in ("appearance", "agd"):
            if fmap is None:
                raise DataError(f"frame {p.frame}: appearance descriptors need a feature map")
            parts.append(appearance_features(fmap, p.quads, self.models.head, scale=self.cfg.stride))
        if mode in ("geometry", "agd"):
            parts.append(geometry_features(p.quads, p.width, p.height, self.models.embed))
        out = np.concatenate(parts, axis=1).astype(np.float32) if p.quads else \
            np.zeros((0, descriptor_width(mode)), dtype=np.float32)
        p.timings["descriptors"] = p.timings.get("descriptors", 0.0) + time.perf_counter() - t0
        return out

    # ---- serial stages ------------------------------------------------------

    def smooth(self, p: Prepared) -> Tensor | None:
        if p.features is None:
            raise DataError(f"frame {p.frame}: ConvLSTM smoothing needs a feature map")
        t0 = time.perf_counter()
        x = p.features
        if self._lstm_state is None or self._lstm_state.h.shape != (self.models.convlstm["b_i"].shape[0],) + x.shape[1:]:
            self._lstm_state = ConvLstmState.zeros(self.models.convlstm["b_i"].shape[0], *x.shape[1:])
        out, self._lstm_state = convlstm_step(x, self._lstm_state, self.models.convlstm)
        p.timings["smooth"] = time.perf_counter() - t0
        return out

    def track(self, p: Prepared) -> FrameOutput:
        if self.cfg.use_convlstm:
            p.descriptors = self.describe(p, self.smooth(p))
        confirmed = self.tracker.update(p.quads, p.descriptors, p.timings)
        return FrameOutput(p.frame, p.quads, p.descriptors, confirmed, p.timings)

    def run(self, records: Sequence[formats.FrameRecord], threads: int | None = None) -> Iterator[FrameOutput]:
        """Process frames in order; yields one output per frame."""
        if not records:
            return
        if self.models is None:
            channels = None
            first = records[0]
            if first.features:
                channels = _read_qtns(first.features, "feature map").shape[0]
            self.models = load_models(self.cfg, channels)
        self.tracker.gru = self.models.gru
        threads = thread_count() if threads is None else threads
        smooth_later = self.cfg.use_convlstm
        if threads <= 1:
            for rec in records:
                yield self.track(self.prepare(rec, smooth_later))
            return
        window = 2 * threads
        with ThreadPoolExecutor(max_workers=threads) as pool:
            pending = []
            it = iter(records)
            for rec in it:
                pending.append(pool.submit(self.prepare, rec, smooth_later))
                if len(pending) >= window:
                    break
            while pending:
                fut = pending.pop(0)
                nxt = next(it, None)
                if nxt is not None:
                    pending.append(pool.submit(self.prepare, nxt, smooth_later))
                yield self.track(fut.result())


def run_tracking(cfg: RunConfig, records: Sequence[formats.FrameRecord], threads: int | None = None,
                 models: Models | None = None) -> list[FrameOutput]:
    from threadpoolctl import threadpool_limits

    # BLAS reductions stay single-threaded so results cannot depend on scheduling
    with threadpool_limits(limits=1):
        return list(Pipeline(cfg, models).run(records, threads))


def trajectory_records(outputs: Iterable[FrameOutput]) -> list[dict]:
    """Trajectory JSONL records, ordered by track id then frame."""
    recs = [formats.trajectory_record(c.frame, c.track_id, c.quad, c.score)
            for o in outputs for c in o.confirmed]
    recs.sort(key=lambda r: (r["track_id"], r["frame"]))
    return recs


def frame_records(outputs: Iterable[FrameOutput]) -> list[dict]:
    """Per-frame confirmed detections D_t, one line per frame."""
    return [{"frame": o.frame,
             "detections": [{"track_id": c.track_id, "quad": formats.quad_list(c.quad), "score": float(c.score)}
                            for c in o.confirmed]}
            for o in outputs]


def descriptor_records(outputs: Iterable[FrameOutput]) -> list[dict]:
    return [formats.descriptor_record(o.frame, i, d) for o in outputs for i, d in enumerate(o.descriptors)]


def timing_summary(outputs: Sequence[FrameOutput]) -> dict:
    """Per-stage mean milliseconds per frame, their sum, and the implied fps."""
    n = len(outputs)
    per_stage = {s: 0.0 for s in STAGES}
    for o in outputs:
        for k, v in o.timings.items():
            per_stage[k] = per_stage.get(k, 0.0) + v
    mean_ms = {k: 1000.0 * v / n for k, v in per_stage.items()} if n else {k: 0.0 for k in per_stage}
    total = sum(mean_ms.values())
    return {"frames": n, "stage_ms": mean_ms, "total_ms": total, "fps": 1000.0 / total if total > 0 else 0.0}
