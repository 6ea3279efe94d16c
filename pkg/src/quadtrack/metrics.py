"""CLEAR-MOT tracking metrics and detection precision / recall / F-measure.

Overlap between quads is polygon IoU.  MOTP is reported as the mean IoU of
matched pairs on a 0-100 scale.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import asdict, dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .assignment import kuhn_munkres
from .errors import DataError, UsageError
from .geometry import Quad, quad_iou


@dataclass
class GtTrack:
    id: int
    quads: dict[int, Quad] = field(default_factory=dict)  # frame -> quad


@dataclass
class MotReport:
    mota: float
    motp: float
    fp: int
    fn: int
    idsw: int
    gt_total: int
    matches: int
    motp_defined: bool = True

    def as_dict(self) -> dict:
        return asdict(self)

    def summary(self) -> str:
        flag = "" if self.motp_defined else " (undefined: no matches)"
        return (f"MOTA {self.mota:.2f}  MOTP {self.motp:.2f}{flag}  "
                f"FP {self.fp}  FN {self.fn}  IDSW {self.idsw}  GT {self.gt_total}  matches {self.matches}")


def _iou_matrix(a: Sequence[Quad], b: Sequence[Quad]) -> np.ndarray:
    M = np.zeros((len(a), len(b)))
    for i, qa in enumerate(a):
        for j, qb in enumerate(b):
            M[i, j] = quad_iou(qa, qb)
    return M


def match_frame(gt: Mapping[int, Quad], hyp: Mapping[int, Quad], prev_corr: Mapping[int, int],
                iou_thresh: float = 0.5) -> dict[int, tuple[int, float]]:
    """CLEAR correspondences for one frame: ``{gt_id: (hyp_id, iou)}``.

    Still-valid previous correspondences are kept first; the rest are
    matched by maximum total IoU, and pairs under ``iou_thresh`` dropped.
    """
    if not 0.0 < iou_thresh < 1.0:
        raise UsageError(f"iou_thresh must be in (0, 1), got {iou_thresh}")
    corr: dict[int, tuple[int, float]] = {}
    for g, h in prev_corr.items():
        if g in gt and h in hyp:
            iou = quad_iou(gt[g], hyp[h])
            if iou >= iou_thresh:
                corr[g] = (h, iou)
    used_h = {h for h, _ in corr.values()}
    g_ids = sorted(g for g in gt if g not in corr)
    h_ids = sorted(h for h in hyp if h not in used_h)
    if g_ids and h_ids:
        iou = _iou_matrix([gt[g] for g in g_ids], [hyp[h] for h in h_ids])
        for i, j in kuhn_munkres(1.0 - iou, 1.0 - iou_thresh):
            if iou[i, j] >= iou_thresh:
                corr[g_ids[i]] = (h_ids[j], float(iou[i, j]))
    return corr


def _by_frame(tracks: Iterable[GtTrack]) -> dict[int, dict[int, Quad]]:
    frames: dict[int, dict[int, Quad]] = defaultdict(dict)
    for t in tracks:
        for f, q in t.quads.items():
            if t.id in frames[f]:
                raise DataError(f"duplicate id {t.id} in frame {f}")
            frames[f][t.id] = q
    return frames


def hyp_from_records(records: Iterable[dict]) -> dict[int, dict[int, Quad]]:
    """Group trajectory records ``{frame, track_id, quad}`` by frame."""
    frames: dict[int, dict[int, Quad]] = defaultdict(dict)
    for r in records:
        f, tid = int(r["frame"]), int(r["track_id"])
        if tid in frames[f]:
            raise DataError(f"track id {tid} appears twice in frame {f}")
        frames[f][tid] = Quad.from_flat(r["quad"], r.get("score"))
    return frames


def mot_metrics(gt: Sequence[GtTrack], hyp, iou_thresh: float = 0.5) -> MotReport:
    """CLEAR-MOT over all frames present in either GT or hypotheses.

    ``hyp`` is either trajectory records (dicts with frame/track_id/quad) or
    a ``{frame: {track_id: Quad}}`` mapping.
    """
    gt_frames = _by_frame(gt)
    hyp_frames = hyp if isinstance(hyp, Mapping) else hyp_from_records(hyp)
    gt_total = sum(len(v) for v in gt_frames.values())
    if gt_total == 0:
        raise UsageError("MOTA is undefined without ground-truth objects")
    if gt_frames and hyp_frames:
        g_lo, g_hi = min(gt_frames), max(gt_frames)
        h_lo, h_hi = min(hyp_frames), max(hyp_frames)
        if h_hi < g_lo or h_lo > g_hi:
            raise DataError(f"hypothesis frames {h_lo}-{h_hi} do not overlap GT frames {g_lo}-{g_hi}")

    fp = fn = idsw = matches = 0
    iou_sum = 0.0
    prev: dict[int, int] = {}
    last_match: dict[int, int] = {}
    for f in sorted(set(gt_frames) | set(hyp_frames)):
        g = gt_frames.get(f, {})
        h = hyp_frames.get(f, {})
        corr = match_frame(g, h, prev, iou_thresh)
        for gid, (hid, iou) in corr.items():
            if gid in last_match and last_match[gid] != hid:
                idsw += 1
            last_match[gid] = hid
            iou_sum += iou
        matches += len(corr)
        fn += len(g) - len(corr)
        fp += len(h) - len(corr)
        prev = {gid: hid for gid, (hid, _) in corr.items()}
    mota = 100.0 * (1.0 - (fn + fp + idsw) / gt_total)
    defined = matches > 0
    motp = 100.0 * iou_sum / matches if defined else 0.0
    return MotReport(mota, motp, fp, fn, idsw, gt_total, matches, defined)


@dataclass(frozen=True)
class PRF:
    precision: float
    recall: float
    f_measure: float
    tp: int
    fp: int
    fn: int


def detection_prf(gt: Mapping[int, Sequence[Quad]], det: Mapping[int, Sequence[Quad]],
                  iou_thresh: float = 0.5) -> PRF:
    """Per-frame one-to-one max-IoU matching; zero denominators give 0."""
    tp = fp = fn = 0
    for f in sorted(set(gt) | set(det)):
        g = list(gt.get(f, ()))
        d = list(det.get(f, ()))
        hit = 0
        if g and d:
            iou = _iou_matrix(g, d)
            hit = sum(1 for i, j in kuhn_munkres(1.0 - iou, 1.0 - iou_thresh) if iou[i, j] >= iou_thresh)
        tp += hit
        fp += len(d) - hit
        fn += len(g) - hit
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    fm = 2 * p * r / (p + r) if p + r else 0.0
    return PRF(p, r, fm, tp, fp, fn)
