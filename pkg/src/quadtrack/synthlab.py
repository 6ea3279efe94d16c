"""Synthetic sequences, brute-force oracles and a toy association trainer.

The synthetic world: text-like quads moving linearly (own velocity plus a
shared camera pan), optionally occluded for spans of frames, each with a
128-d appearance signature.  "Twin" instances share a signature, the way
repeated words on signs do.  Feature maps render each instance's colour
inside its quad over background noise; detection maps are the encoded GT.
"""

from __future__ import annotations

import hashlib
import itertools
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import tensor_core as tc
from .assignment import kuhn_munkres
from .descriptor import (APPEARANCE_SIZE, geometry_embed, geometry_embed_array,
                         init_geometry_embed, select_part)
from .errors import NonFiniteError, TrainingDiverged, UsageError
from .geometry import DetectionMaps, Quad, encode_targets, quad_iou
from .losses import LossWeights, contrastive_track_loss
from .metrics import GtTrack
from .recurrent import gru_step, gru_step_array, init_gru_identity
from .tensor_core import ParameterSet, Tape, Tensor

log = logging.getLogger(__name__)

MOTIONS = ("static", "linear", "crossing")
BRUTE_FORCE_MAX = 8


@dataclass(frozen=True)
class ScenarioConfig:
    frames: int = 24
    width: int = 512
    height: int = 512
    instances: int = 2
    channels: int = 8
    stride: float = 4.0
    motion: str = "linear"
    speed: tuple[float, float] = (0.0, 4.0)        # own speed range, px/frame
    pan: tuple[float, float] = (0.0, 0.0)          # shared camera motion, px/frame
    size_w: tuple[float, float] = (48.0, 112.0)
    size_h: tuple[float, float] = (14.0, 28.0)
    tilt: float = 0.1                              # max rotation, radians
    occlusions: tuple[tuple[int, int, int], ...] = ()  # (instance, first, last + 1)
    occlusion_rate: float = 0.0                    # chance an instance gets a random window
    occlusion_len: tuple[int, int] = (2, 5)
    exits: bool = False                            # instances may enter/leave the frame
    dropout: float = 0.0                           # per-frame chance a visible instance is missed
    twins: int = 0                                 # instance pairs sharing a signature
    signature_scale: float = 0.3
    appearance_noise: float = 0.03
    geometry_noise: float = 0.0
    map_noise: float = 0.05
    distractors: int = 0                           # false boxes per frame
    render: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.motion not in MOTIONS:
            raise UsageError(f"motion must be one of {MOTIONS}, got {self.motion!r}")
        if self.frames < 1 or self.instances < 0:
            raise UsageError("need frames >= 1 and instances >= 0")
        if self.motion == "crossing" and self.instances != 2:
            raise UsageError("crossing motion needs exactly 2 instances")
        if 2 * self.twins > self.instances:
            raise UsageError(f"{self.twins} twin pairs need at least {2 * self.twins} instances")
        for inst, a, b in self.occlusions:
            if not (0 <= inst < self.instances and 0 <= a < b <= self.frames):
                raise UsageError(f"occlusion window {(inst, a, b)} outside the scenario")


@dataclass
class SyntheticSequence:
    cfg: ScenarioConfig
    quads: np.ndarray            # instances x frames x 4 x 2, including occluded frames
    visible: np.ndarray          # instances x frames
    signatures: np.ndarray       # instances x 128
    colors: np.ndarray           # instances x C
    appearance: np.ndarray       # instances x frames x 128, noisy observations
    distractor_quads: list[np.ndarray] = field(default_factory=list)       # per frame: n x 4 x 2
    distractor_appearance: list[np.ndarray] = field(default_factory=list)  # per frame: n x 128
    feature_maps: list[Tensor] | None = None
    detection_maps: list[DetectionMaps] | None = None

    @property
    def frames(self) -> int:
        return self.cfg.frames

    def gt_tracks(self) -> list[GtTrack]:
        tracks = []
        for i in range(self.quads.shape[0]):
            quads = {t: Quad(self.quads[i, t]) for t in range(self.frames) if self.visible[i, t]}
            tracks.append(GtTrack(i + 1, quads))
        return tracks

    def visible_ids(self, t: int) -> list[int]:
        return [i for i in range(self.quads.shape[0]) if self.visible[i, t]]

    def digest(self) -> str:
        h = hashlib.sha256()
        for arr in (self.quads, self.visible, self.signatures, self.colors, self.appearance,
                    *self.distractor_quads, *self.distractor_appearance):
            h.update(np.ascontiguousarray(arr).tobytes())
        for t in self.feature_maps or ():
            h.update(t.data.tobytes())
        for m in self.detection_maps or ():
            h.update(m.score.data.tobytes())
            h.update(m.offsets.data.tobytes())
        return h.hexdigest()


def _base_quad(w: float, h: float, angle: float) -> np.ndarray:
    corners = np.array([(-w / 2, -h / 2), (w / 2, -h / 2), (w / 2, h / 2), (-w / 2, h / 2)])
    c, s = math.cos(angle), math.sin(angle)
    return corners @ np.array([[c, s], [-s, c]])


def _aabb_overlap(a: np.ndarray, b: np.ndarray, pad: float = 2.0) -> bool:
    return not (a[:, 0].max() + pad < b[:, 0].min() or b[:, 0].max() + pad < a[:, 0].min()
                or a[:, 1].max() + pad < b[:, 1].min() or b[:, 1].max() + pad < a[:, 1].min())


def _place(cfg: ScenarioConfig, rng: np.random.Generator, shapes, vels) -> np.ndarray:
    """Frame-0 centres: inside for the whole run, or (with exits) at some frame."""
    T = cfg.frames - 1
    centres = []
    for shape, v in zip(shapes, vels):
        half = np.abs(shape).max(axis=0) + 1.0
        if cfg.exits:
            pos = rng.uniform(half, np.array([cfg.width, cfg.height]) - half)
            centres.append(pos - v * rng.integers(0, T + 1))
            continue
        lo = np.maximum(half, half - v * T)
        hi = np.minimum(np.array([cfg.width, cfg.height]) - half,
                        np.array([cfg.width, cfg.height]) - half - v * T)
        if np.any(lo > hi):
            raise UsageError("instance cannot stay inside the frame at this speed")
        centres.append(rng.uniform(lo, hi))
    return np.array(centres)


def _inside(cfg: ScenarioConfig, shape, centre, v) -> bool:
    for t in (0, cfg.frames - 1):
        pts = shape + centre + v * t
        if pts.min() < 0 or pts[:, 0].max() > cfg.width or pts[:, 1].max() > cfg.height:
            return False
    return True


def _crossing(cfg: ScenarioConfig, rng, shapes):
    """Two instances on nearby rows swapping horizontal order."""
    T = max(cfg.frames - 1, 1)
    h = max(np.ptp(s[:, 1]) for s in shapes)
    w = max(np.ptp(s[:, 0]) for s in shapes)
    y = cfg.height / 2
    x_left = cfg.width / 2 - 0.8 * w
    x_right = cfg.width / 2 + 0.8 * w
    centres = np.array([(x_left, y - 0.35 * h), (x_right, y + 0.35 * h)])
    vels = np.array([((x_right - x_left) / T, 0.0), (-(x_right - x_left) / T, 0.0)])
    return centres, vels


def generate_sequence(cfg: ScenarioConfig) -> SyntheticSequence:
    """Deterministic synthetic sequence for ``cfg`` (same seed, same bytes)."""
    rng = np.random.default_rng(cfg.seed)
    n, T = cfg.instances, cfg.frames
    shapes = [_base_quad(rng.uniform(*cfg.size_w), rng.uniform(*cfg.size_h),
                         rng.uniform(-cfg.tilt, cfg.tilt)) for _ in range(n)]
    for k in range(cfg.twins):
        shapes[2 * k + 1] = shapes[2 * k]
    pan = np.asarray(cfg.pan, dtype=np.float64)
    if cfg.motion == "crossing":
        centres, vels = _crossing(cfg, rng, shapes)
    else:
        for attempt in range(200):
            if cfg.motion == "static":
                vels = np.zeros((n, 2))
            else:
                speed = rng.uniform(*cfg.speed, size=n)
                ang = rng.uniform(0, 2 * math.pi, size=n)
                vels = np.stack([speed * np.cos(ang), speed * np.sin(ang)], axis=1) + pan
            # a repeated word sits on the same line as its twin and moves with it
            for k in range(cfg.twins):
                vels[2 * k + 1] = vels[2 * k]
            try:
                centres = _place(cfg, rng, shapes, vels)
            except UsageError:
                continue
            for k in range(cfg.twins):
                gap = np.ptp(shapes[2 * k][:, 0]) + rng.uniform(6.0, 24.0)
                centres[2 * k + 1] = centres[2 * k] + (gap if rng.uniform() < 0.5 else -gap, 0.0)
            if not cfg.exits and not all(_inside(cfg, shapes[i], centres[i], vels[i]) for i in range(n)):
                continue
            starts = [s + c for s, c in zip(shapes, centres)]
            ends = [s + c + v * (T - 1) for s, c, v in zip(shapes, centres, vels)]
            if not any(_aabb_overlap(starts[a], starts[b]) or _aabb_overlap(ends[a], ends[b])
                       for a, b in itertools.combinations(range(n), 2)):
                break
        else:
            raise UsageError("could not place instances without overlap at spawn; "
                             "reduce instance count or sizes")

    t_idx = np.arange(T, dtype=np.float64)
    quads = np.empty((n, T, 4, 2))
    for i in range(n):
        traj = centres[i][None, :] + vels[i][None, :] * t_idx[:, None]
        quads[i] = shapes[i][None] + traj[:, None, :]
    if cfg.geometry_noise > 0:
        quads += rng.uniform(-cfg.geometry_noise, cfg.geometry_noise, quads.shape)
    if cfg.motion == "crossing":
        starts = quads[:, 0]
        if quad_iou(Quad(starts[0]), Quad(starts[1])) > 0:
            raise UsageError("crossing instances overlap at spawn")

    inside = ((quads.min(axis=2) >= 0.0).all(axis=-1)
              & (quads[..., 0].max(axis=2) <= cfg.width) & (quads[..., 1].max(axis=2) <= cfg.height))
    visible = inside if cfg.exits else np.ones((n, T), dtype=bool)
    for inst, a, b in cfg.occlusions:
        visible[inst, a:b] = False
    if cfg.occlusion_rate > 0:
        for i in range(n):
            if rng.uniform() < cfg.occlusion_rate and T > 2:
                length = int(rng.integers(cfg.occlusion_len[0], cfg.occlusion_len[1] + 1))
                start = int(rng.integers(1, max(2, T - length)))
                visible[i, start:start + length] = False

    if cfg.dropout > 0:
        visible &= rng.uniform(size=visible.shape) >= cfg.dropout

    signatures = rng.uniform(-cfg.signature_scale, cfg.signature_scale, (n, APPEARANCE_SIZE))
    colors = rng.uniform(-1.0, 1.0, (n, cfg.channels))
    for k in range(cfg.twins):
        signatures[2 * k + 1] = signatures[2 * k]
        colors[2 * k + 1] = colors[2 * k]
    appearance = signatures[:, None, :] + rng.uniform(
        -cfg.appearance_noise, cfg.appearance_noise, (n, T, APPEARANCE_SIZE))

    d_quads, d_app = [], []
    for t in range(T):
        dq = []
        for _ in range(cfg.distractors):
            shape = _base_quad(rng.uniform(*cfg.size_w), rng.uniform(*cfg.size_h), rng.uniform(-cfg.tilt, cfg.tilt))
            half = np.abs(shape).max(axis=0) + 1.0
            c = rng.uniform(half, np.array([cfg.width, cfg.height]) - half)
            dq.append(shape + c)
        d_quads.append(np.array(dq).reshape(-1, 4, 2))
        d_app.append(rng.uniform(-cfg.signature_scale, cfg.signature_scale, (cfg.distractors, APPEARANCE_SIZE)))

    seq = SyntheticSequence(cfg, quads, visible, signatures.astype(np.float32), colors.astype(np.float32),
                            appearance.astype(np.float32), d_quads, [a.astype(np.float32) for a in d_app])
    if cfg.render:
        _render(seq, rng)
    return seq


def _render(seq: SyntheticSequence, rng: np.random.Generator) -> None:
    cfg = seq.cfg
    mh = int(math.ceil(cfg.height / cfg.stride))
    mw = int(math.ceil(cfg.width / cfg.stride))
    ys, xs = np.mgrid[0:mh, 0:mw].astype(np.float64)
    from .geometry import points_in_convex

    fmaps, dmaps = [], []
    for t in range(cfg.frames):
        fm = rng.uniform(-cfg.map_noise, cfg.map_noise, (cfg.channels, mh, mw))
        vis = seq.visible_ids(t)
        for i in vis:
            mask = points_in_convex(seq.quads[i, t] / cfg.stride, xs, ys)
            fm[:, mask] = seq.colors[i][:, None]
        fmaps.append(Tensor(fm))
        dmaps.append(encode_targets([Quad(seq.quads[i, t]) for i in vis], mh, mw, cfg.stride))
    seq.feature_maps = fmaps
    seq.detection_maps = dmaps


def crossing_scenario(frames: int = 5, seed: int = 0, **kw) -> ScenarioConfig:
    return ScenarioConfig(frames=frames, instances=2, motion="crossing", seed=seed, **kw)


# --------------------------------------------------------------------------
# oracles


def brute_force_assignment(cost) -> tuple[list[tuple[int, int]], float]:
    """Exact minimum over all n! permutations of a square matrix (n <= 8)."""
    C = np.asarray(cost, dtype=np.float64)
    n = C.shape[0]
    if C.ndim != 2 or C.shape[1] != n:
        raise UsageError(f"brute force needs a square matrix, got {C.shape}")
    if n > BRUTE_FORCE_MAX:
        raise UsageError(f"n={n} > {BRUTE_FORCE_MAX}: {math.factorial(n)} permutations refused")
    if n == 0:
        return [], 0.0
    best, best_perm = math.inf, None
    rows = range(n)
    for perm in itertools.permutations(range(n)):
        total = sum(C[i, perm[i]] for i in rows)
        if total < best:
            best, best_perm = total, perm
    return [(i, best_perm[i]) for i in rows], float(best)


def _inside_crossing_number(poly: np.ndarray, px: np.ndarray, py: np.ndarray) -> np.ndarray:
    """Even-odd ray casting, independent of the half-plane tests in geometry."""
    inside = np.zeros(px.shape, dtype=bool)
    n = len(poly)
    for k in range(n):
        x1, y1 = poly[k]
        x2, y2 = poly[(k + 1) % n]
        straddle = (y1 > py) != (y2 > py)
        with np.errstate(divide="ignore", invalid="ignore"):
            xcross = x1 + (py - y1) * (x2 - x1) / (y2 - y1)
        inside ^= straddle & (px < xcross)
    return inside


def monte_carlo_iou(a, b, samples: int = 100_000, seed: int = 0) -> float:
    """IoU estimate from uniform points over the joint bounding box."""
    if samples < 10_000:
        raise UsageError(f"monte_carlo_iou needs >= 10^4 samples, got {samples}")
    pa = a.pts if isinstance(a, Quad) else np.asarray(a, dtype=np.float64).reshape(-1, 2)
    pb = b.pts if isinstance(b, Quad) else np.asarray(b, dtype=np.float64).reshape(-1, 2)
    lo = np.minimum(pa.min(0), pb.min(0))
    hi = np.maximum(pa.max(0), pb.max(0))
    rng = np.random.default_rng(seed)
    pts = rng.uniform(lo, hi, (samples, 2))
    ia = _inside_crossing_number(pa, pts[:, 0], pts[:, 1])
    ib = _inside_crossing_number(pb, pts[:, 0], pts[:, 1])
    union = np.count_nonzero(ia | ib)
    return float(np.count_nonzero(ia & ib) / union) if union else 0.0


# --------------------------------------------------------------------------
# toy training of geometry embedding + GRU with the contrastive loss


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 2000
    lr: float = 0.05
    window: int = 6
    top_k: int = 10
    matching: str = "eagd"
    descriptor: str = "agd"
    margin: float = 1.0
    train_sequences: int = 32
    heldout_sequences: int = 8
    eval_every: int = 100
    probe_windows: int = 16
    scenario: ScenarioConfig = field(default_factory=lambda: ScenarioConfig(render=False, distractors=8))
    seed: int = 0

    def __post_init__(self):
        if self.matching not in ("eagd", "agd"):
            raise UsageError(f"matching must be 'eagd' or 'agd', got {self.matching!r}")
        if self.descriptor not in ("agd", "geometry", "appearance"):
            raise UsageError(f"unknown descriptor mode {self.descriptor!r}")
        if self.window < 2:
            raise UsageError("window must cover at least 2 frames")


@dataclass
class TrainReport:
    loss_curve: list[tuple[int, float]]   # (step, mean loss on fixed probe windows)
    step_losses: list[float]              # per-step minibatch loss
    accuracy: float
    accuracy_curve: list[tuple[int, float]]
    steps_run: int
    initial_accuracy: float


@dataclass
class _Frame:
    ids: np.ndarray          # instance id per proposal, -1 for distractors
    appearance: np.ndarray   # K x 128
    coords: np.ndarray       # 8 x K normalised vertex coordinates


def _frames_of(seq: SyntheticSequence, top_k: int) -> list[_Frame]:
    cfg = seq.cfg
    scale = np.array([cfg.width, cfg.height], dtype=np.float64)
    out = []
    for t in range(seq.frames):
        vis = seq.visible_ids(t)
        nd = max(0, min(len(seq.distractor_quads[t]), top_k - len(vis)))
        ids = np.array(vis + [-1] * nd, dtype=np.int64)
        app = np.concatenate([seq.appearance[vis, t], seq.distractor_appearance[t][:nd]], axis=0)
        quads = np.concatenate([seq.quads[vis, t], seq.distractor_quads[t][:nd]], axis=0)
        coords = (quads / scale).reshape(len(ids), 8).T if len(ids) else np.zeros((8, 0))
        out.append(_Frame(ids, app.astype(np.float64), coords))
    return out


@dataclass
class _Step:
    carry: list[tuple[int, np.ndarray]]   # GRU input: sum over s of h_s @ S
    refs: list[tuple[int, np.ndarray]]    # matching rows: sum over s of src_s @ M
    labels: np.ndarray                    # rows x proposals


def _plan(frames: Sequence[_Frame]) -> list[_Step]:
    """Tracker-shaped bookkeeping for a run of frames.

    An instance's reference is its descriptor (or GRU output) at its last
    observation, however many frames ago.  The GRU state carries over only
    between consecutive observations.
    Previous-frame distractors join the rows as extra negatives.
    """
    last: dict[int, tuple[int, int]] = {}
    steps = []
    for k, f in enumerate(frames):
        carry: dict[int, np.ndarray] = {}
        for j, i in enumerate(f.ids):
            if i >= 0 and i in last and last[i][0] == k - 1:
                s, c = last[i]
                carry.setdefault(s, np.zeros((len(frames[s].ids), len(f.ids))))[c, j] = 1.0
        rows = []
        if k >= 1:
            rows = [(s, c, i) for i, (s, c) in sorted(last.items())]
            rows += [(k - 1, c, -1) for c, i in enumerate(frames[k - 1].ids) if i < 0]
        refs: dict[int, np.ndarray] = {}
        for r, (s, c, _) in enumerate(rows):
            refs.setdefault(s, np.zeros((len(frames[s].ids), len(rows))))[c, r] = 1.0
        ids = np.array([i for _, _, i in rows], dtype=np.int64)
        labels = ((ids[:, None] == f.ids[None, :]) & (ids[:, None] >= 0)).astype(np.float64)
        steps.append(_Step(sorted(carry.items()), sorted(refs.items()), labels))
        for j, i in enumerate(f.ids):
            if i >= 0:
                last[int(i)] = (k, j)
    return steps


def _gather(src, sel, tracked: bool):
    out = None
    for s, S in sel:
        part = tc.matmul(src[s], tc.as_tensor(S, np.float64)) if tracked else src[s] @ S
        out = part if out is None else (tc.add(out, part) if tracked else out + part)
    return out


def _descriptor(frame: _Frame, emb: ParameterSet | None, mode: str, tracked: bool):
    """Descriptor columns [D x K] for one frame, tape-tracked or plain."""
    parts = []
    if mode in ("agd", "appearance"):
        a = frame.appearance.T
        parts.append(tc.as_tensor(a, np.float64) if tracked else a)
    if mode in ("agd", "geometry"):
        if tracked:
            parts.append(geometry_embed(tc.as_tensor(frame.coords, np.float64), emb))
        else:
            parts.append(geometry_embed_array(frame.coords, emb).astype(np.float64))
    if tracked:
        return parts[0] if len(parts) == 1 else tc.concat(parts, axis=0)
    return parts[0] if len(parts) == 1 else np.concatenate(parts, axis=0)


def _references(frames, xs, plan, gru, matching: str, tracked: bool):
    """Per-frame sources of matching rows: descriptors, or GRU outputs in eagd mode."""
    if matching != "eagd":
        return xs
    hs = []
    for k in range(len(frames) - 1):
        d, n = xs[k].shape[0], len(frames[k].ids)
        h_in = _gather(hs, plan[k].carry, tracked)
        if h_in is None:
            h_in = tc.zeros((d, n), np.float64) if tracked else np.zeros((d, n))
        if tracked:
            h, _ = gru_step(xs[k], h_in, gru)
        else:
            h = gru_step_array(xs[k], h_in, gru).astype(np.float64)
        hs.append(h)
    return hs


def _window_loss(frames: Sequence[_Frame], emb, gru, cfg: TrainConfig, w: LossWeights):
    """Mean contrastive loss over the frames of a window, on a tape."""
    xs = [_descriptor(f, emb, cfg.descriptor, True) for f in frames]
    plan = _plan(frames)
    src = _references(frames, xs, plan, gru, cfg.matching, True)
    total, count = None, 0
    for k in range(1, len(frames)):
        if not plan[k].refs or len(frames[k].ids) == 0:
            continue
        R = _gather(src, plan[k].refs, True)
        l = contrastive_track_loss(tc.transpose(R), tc.transpose(xs[k]), plan[k].labels, w)
        total = l if total is None else tc.add(total, l)
        count += 1
    if total is None:
        return None
    return tc.scale(total, 1.0 / count)


def association_accuracy(seqs_frames: Sequence[Sequence[_Frame]], emb, gru, cfg: TrainConfig) -> float:
    """Fraction of frames whose thresholded KM matching equals the GT pairing."""
    good = total = 0
    for frames in seqs_frames:
        xs = [_descriptor(f, emb, cfg.descriptor, False) for f in frames]
        plan = _plan(frames)
        src = _references(frames, xs, plan, gru, cfg.matching, False)
        for k in range(1, len(frames)):
            if not plan[k].refs or len(frames[k].ids) == 0:
                continue
            A = _gather(src, plan[k].refs, False).T
            B = xs[k].T
            cost = np.sqrt(((A[:, None, :] - B[None, :, :]) ** 2).sum(-1))
            pred = set(kuhn_munkres(cost, cfg.margin))
            truth = {(int(i), int(j)) for i, j in zip(*np.nonzero(plan[k].labels))}
            good += pred == truth
            total += 1
    return good / total if total else 0.0


def _sgd(params: ParameterSet, tracked: ParameterSet, grads, lr: float) -> None:
    for name in params.names():
        g = grads[tracked[name]]
        params[name] = Tensor(params[name].data - lr * g, dtype=params[name].dtype)


def toy_train(cfg: TrainConfig, emb: ParameterSet | None = None,
              gru: ParameterSet | None = None) -> tuple[ParameterSet, ParameterSet | None, TrainReport]:
    """Plain SGD on the contrastive association loss over synthetic windows.

    Only the geometry embedding and (in ``eagd`` mode) the GRU learn;
    appearance is the sequences' noisy signature vectors.
    """
    rng = np.random.default_rng(cfg.seed)
    scen = replace(cfg.scenario, render=False, distractors=max(cfg.scenario.distractors, 0))
    train = [_frames_of(generate_sequence(replace(scen, seed=cfg.seed * 100_003 + k)), cfg.top_k)
             for k in range(cfg.train_sequences)]
    held = [_frames_of(generate_sequence(replace(scen, seed=cfg.seed * 100_003 + 50_000 + k)), cfg.top_k)
            for k in range(cfg.heldout_sequences)]

    emb = (emb or init_geometry_embed(seed=cfg.seed)).astype(np.float64)
    dim = {"agd": APPEARANCE_SIZE + 8, "geometry": 8, "appearance": APPEARANCE_SIZE}[cfg.descriptor]
    if cfg.matching == "eagd":
        gru = (gru or init_gru_identity(dim, seed=cfg.seed)).astype(np.float64)
    else:
        gru = None
    w = LossWeights(margin=cfg.margin)
    learn_emb = cfg.descriptor != "appearance"

    losses: list[float] = []
    curve: list[tuple[int, float]] = []
    T = min(cfg.window, scen.frames)
    probe_rng = np.random.default_rng([cfg.seed, 1])
    probe = []
    for _ in range(cfg.probe_windows):
        frames = train[int(probe_rng.integers(len(train)))]
        t0 = int(probe_rng.integers(0, scen.frames - T + 1))
        probe.append(frames[t0:t0 + T])

    def probe_loss() -> float:
        vals = [l.item() for l in (_window_loss(f, emb, gru, cfg, w) for f in probe) if l is not None]
        return float(np.mean(vals)) if vals else 0.0

    def record(step_i: int) -> None:
        curve.append((step_i, association_accuracy(held, emb, gru, cfg)))
        loss_curve.append((step_i, probe_loss()))

    loss_curve: list[tuple[int, float]] = []
    record(0)
    initial_acc, initial_loss = curve[0][1], loss_curve[0][1]
    blowup = 0
    for step_i in range(cfg.steps):
        frames = train[int(rng.integers(len(train)))]
        t0 = int(rng.integers(0, scen.frames - T + 1))
        tape = Tape()
        emb_t = emb.watch(tape) if learn_emb else emb
        gru_t = gru.watch(tape) if gru is not None else None
        try:
            with np.errstate(over="ignore", invalid="ignore"):
                loss = _window_loss(frames[t0:t0 + T], emb_t, gru_t, cfg, w)
        except NonFiniteError as e:
            raise TrainingDiverged(f"non-finite values at step {step_i}: {e}",
                                   {"step": step_i, "initial": initial_loss, "recent": losses[-20:]}) from None
        if loss is not None:
            val = loss.item()
            losses.append(val)
            if not math.isfinite(val) or val > 10 * max(initial_loss, 1e-12):
                blowup += 1
                if blowup >= 100 or not math.isfinite(val):
                    raise TrainingDiverged(
                        f"loss {val:.4g} above 10x initial {initial_loss:.4g} for {blowup} steps",
                        {"step": step_i, "loss": val, "initial": initial_loss, "recent": losses[-20:]})
            else:
                blowup = 0
            if cfg.lr > 0 and (learn_emb or gru is not None):
                grads = tape.backward(loss)
                if learn_emb:
                    _sgd(emb, emb_t, grads, cfg.lr)
                if gru is not None:
                    _sgd(gru, gru_t, grads, cfg.lr)
        if cfg.eval_every and (step_i + 1) % cfg.eval_every == 0:
            record(step_i + 1)
    if curve[-1][0] != cfg.steps:
        record(cfg.steps)
    report = TrainReport(loss_curve, losses, curve[-1][1], curve, cfg.steps, initial_acc)
    emb32 = emb.astype(np.float32)
    gru32 = gru.astype(np.float32) if gru is not None else None
    return emb32, gru32, report


# --------------------------------------------------------------------------
# ablation benchmark: the four descriptor / matching variants on one world

ABLATION_ROWS = (
    ("appearance-only", "appearance", "agd"),
    ("geometry-only", "geometry", "agd"),
    ("AGD-AGD", "agd", "agd"),
    ("EAGD-AGD", "agd", "eagd"),
)


def benchmark_scenario(seed: int = 0, **kw) -> ScenarioConfig:
    """Occlusion-heavy world: repeated words on shared lines, a fast camera pan.

    Text enters on one side and leaves on the other; instances also drop
    out for single frames and longer occlusion spans.
    """
    base = dict(frames=20, instances=8, twins=3, motion="linear", speed=(0.0, 1.0), pan=(40.0, 0.0),
                exits=True, size_w=(40.0, 80.0), size_h=(12.0, 20.0), occlusion_rate=0.3,
                occlusion_len=(1, 3), dropout=0.1, geometry_noise=0.5, distractors=2, render=False,
                seed=seed)
    base.update(kw)
    return ScenarioConfig(**base)


@dataclass(frozen=True)
class AblationConfig:
    seed: int = 0
    sequences: int = 12
    steps: int = 1500
    lr: float = 0.5
    theta_m: float = 1.0
    detection_score: float = 0.9
    distractor_score: float = 0.5
    scenario_overrides: tuple[tuple[str, object], ...] = ()

    def scenario(self, seed: int) -> ScenarioConfig:
        return benchmark_scenario(seed, **dict(self.scenario_overrides))


def sequence_detections(seq: SyntheticSequence, t: int, det_score: float = 0.9,
                        distractor_score: float = 0.5):
    """Frame ``t`` proposals: visible GT quads plus distractor boxes, with appearance rows."""
    vis = seq.visible_ids(t)
    quads = [Quad(seq.quads[i, t], det_score) for i in vis]
    quads += [Quad(q, distractor_score) for q in seq.distractor_quads[t]]
    app = np.concatenate([seq.appearance[vis, t], seq.distractor_appearance[t]], axis=0)
    return quads, app


def track_sequence(seq: SyntheticSequence, descriptor: str, matching: str, emb: ParameterSet | None,
                   gru: ParameterSet | None, theta_m: float = 1.0, det_score: float = 0.9,
                   distractor_score: float = 0.5, top_k: int = 10):
    """Run the online tracker over a synthetic sequence; returns ``{frame: {track_id: Quad}}``."""
    from .tracker import Tracker, TrackerConfig

    cfg = seq.cfg
    scale = np.array([cfg.width, cfg.height], dtype=np.float64)
    tracker = Tracker(TrackerConfig(theta_m=theta_m, top_k=top_k, matching=matching), gru)
    hyp: dict[int, dict[int, Quad]] = {}
    for t in range(seq.frames):
        quads, app = sequence_detections(seq, t, det_score, distractor_score)
        quads, app = quads[:top_k], app[:top_k]
        coords = np.array([q.pts / scale for q in quads]).reshape(len(quads), 8).T
        frame = _Frame(np.zeros(len(quads), dtype=np.int64), app.astype(np.float64), coords)
        desc = _descriptor(frame, emb, descriptor, False).T if quads else np.zeros((0, 1))
        hyp[t] = {c.track_id: c.quad for c in tracker.update(quads, desc)}
    return hyp


def run_ablation(cfg: AblationConfig = AblationConfig()):
    """Train each variant on the benchmark world, then score MOTA on held-out sequences.

    Returns ``{row name: MotReport}`` (in table order) and the training reports.
    """
    from .metrics import mot_metrics

    scen = cfg.scenario(0)
    test = [generate_sequence(cfg.scenario(900_000 + cfg.seed * 1000 + k)) for k in range(cfg.sequences)]
    results, reports = {}, {}
    for name, descriptor, matching in ABLATION_ROWS:
        tcfg = TrainConfig(steps=cfg.steps if descriptor != "appearance" else 0, lr=cfg.lr,
                           matching=matching, descriptor=descriptor, margin=cfg.theta_m,
                           scenario=scen, seed=cfg.seed, eval_every=0)
        emb, gru, rep = toy_train(tcfg)
        reports[name] = rep
        gt, hyp = [], {}
        offset = 0
        for seq in test:
            h = track_sequence(seq, descriptor, matching, emb, gru, cfg.theta_m,
                               cfg.detection_score, cfg.distractor_score)
            for tr in seq.gt_tracks():
                gt.append(GtTrack(offset * 1000 + tr.id, {offset * 1000 + f: q for f, q in tr.quads.items()}))
            for f, row in h.items():
                hyp[offset * 1000 + f] = {offset * 1000 + tid: q for tid, q in row.items()}
            offset += 1
        results[name] = mot_metrics(gt, hyp)
    return results, reports


# --------------------------------------------------------------------------
# export in the harness formats


def write_sequence(seq: SyntheticSequence, out_dir) -> dict[str, str]:
    """Write feature maps, detection maps, manifest and GT under ``out_dir``.

    Returns the written top-level paths (manifest, gt).
    """
    from pathlib import Path

    from . import formats
    from .tensor_core import write_tensor

    if seq.feature_maps is None or seq.detection_maps is None:
        raise UsageError("sequence was generated with render=False; nothing to write")
    out = Path(out_dir)
    (out / "features").mkdir(parents=True, exist_ok=True)
    (out / "maps").mkdir(parents=True, exist_ok=True)
    records = []
    for t in range(seq.frames):
        fp = f"features/{t:05d}.qtns"
        mp = f"maps/{t:05d}.qtns"
        write_tensor(out / fp, seq.feature_maps[t])
        write_tensor(out / mp, seq.detection_maps[t].stacked())
        records.append(formats.FrameRecord(t, fp, mp))
    formats.write_manifest(out / "manifest.jsonl", records)
    gt = [formats.gt_record(t, i + 1, Quad(seq.quads[i, t]))
          for t in range(seq.frames) for i in seq.visible_ids(t)]
    formats.write_jsonl(out / "gt.jsonl", gt)
    return {"manifest": str(out / "manifest.jsonl"), "gt": str(out / "gt.jsonl")}
