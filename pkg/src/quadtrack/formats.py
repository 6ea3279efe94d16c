"""JSONL record streams: manifests, detections, trajectories, ground truth, descriptor dumps.

Floats are written with ``repr`` precision, so every record round-trips
exactly through write and parse.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .errors import DataError, GeometryError
from .geometry import Quad
from .metrics import GtTrack


@dataclass(frozen=True)
class FrameRecord:
    frame: int
    features: str | None = None     # QTNS [C x H x W]
    maps: str | None = None         # QTNS [9 x H x W]: score then 8 offsets
    detections: str | None = None   # JSONL of precomputed detections for this frame

    def to_json(self) -> dict:
        d = {"frame": self.frame}
        for k in ("features", "maps", "detections"):
            v = getattr(self, k)
            if v is not None:
                d[k] = v
        return d


def dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def write_jsonl(path, records: Iterable[dict]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for r in records:
            f.write(dumps(r))
            f.write("\n")


def read_jsonl(path) -> Iterator[tuple[int, dict]]:
    """Yield ``(line_number, record)``; malformed lines raise DataError."""
    try:
        f = open(path, encoding="utf-8")
    except OSError as e:
        raise DataError(f"cannot open {path}: {e}") from None
    with f:
        for n, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise DataError(f"{path}:{n}: invalid JSON ({e.msg})") from None
            if not isinstance(rec, dict):
                raise DataError(f"{path}:{n}: expected an object")
            yield n, rec


def _field(rec: dict, key: str, where: str, kind=None):
    if key not in rec:
        raise DataError(f"{where}: missing field {key!r}")
    v = rec[key]
    if kind is int and (not isinstance(v, int) or isinstance(v, bool)):
        raise DataError(f"{where}: {key!r} must be an integer")
    return v


def _quad(rec: dict, where: str, score_key: str | None = None) -> Quad:
    flat = _field(rec, "quad", where)
    if not isinstance(flat, list) or len(flat) != 8:
        raise DataError(f"{where}: quad must be a list of 8 numbers")
    score = rec.get(score_key) if score_key else None
    if not all(isinstance(v, (int, float)) and not isinstance(v, bool) and np.isfinite(v) for v in flat):
        raise DataError(f"{where}: quad coordinates must be finite numbers")
    try:
        return Quad.from_flat(flat, score)
    except (GeometryError, ValueError, TypeError) as e:
        raise DataError(f"{where}: bad quad ({e})") from None


def quad_list(q: Quad) -> list[float]:
    return [float(v) for v in q.flat()]


# --------------------------------------------------------------------------
# manifest


def read_manifest(path) -> list[FrameRecord]:
    """Frame records sorted by index; paths resolved against the manifest's directory.

    Indices must be contiguous from 0; a gap aborts with the missing frames.
    """
    base = Path(path).parent
    recs: dict[int, FrameRecord] = {}
    for n, r in read_jsonl(path):
        where = f"{path}:{n}"
        f = _field(r, "frame", where, int)
        if f in recs:
            raise DataError(f"{where}: frame {f} listed twice")

        def res(key):
            v = r.get(key)
            if v is None:
                return None
            p = Path(v)
            return str(p if p.is_absolute() else base / p)

        recs[f] = FrameRecord(f, res("features"), res("maps"), res("detections"))
    frames = sorted(recs)
    missing = sorted(set(range(len(frames) and frames[-1] + 1)) - set(frames))
    if missing or (frames and frames[0] != 0):
        shown = ", ".join(map(str, missing[:10])) + (" ..." if len(missing) > 10 else "")
        raise DataError(f"{path}: frames must be contiguous from 0; missing {shown}")
    return [recs[f] for f in frames]


def write_manifest(path, records: Iterable[FrameRecord]) -> None:
    write_jsonl(path, (r.to_json() for r in records))


# --------------------------------------------------------------------------
# detections / trajectories / ground truth


def detection_record(frame: int, q: Quad) -> dict:
    return {"frame": frame, "quad": quad_list(q), "score": float(q.score if q.score is not None else 1.0)}


def read_detections(path) -> dict[int, list[Quad]]:
    """``{frame: [scored Quad]}`` from detection JSONL (score defaults to 1)."""
    out: dict[int, list[Quad]] = {}
    for n, r in read_jsonl(path):
        where = f"{path}:{n}"
        f = _field(r, "frame", where, int)
        q = _quad(r, where)
        score = r.get("score", 1.0)
        if not isinstance(score, (int, float)) or not 0.0 <= score <= 1.0:
            raise DataError(f"{where}: score must be a number in [0, 1]")
        out.setdefault(f, []).append(q.with_score(float(score)))
    return out


def trajectory_record(frame: int, track_id: int, q: Quad, score: float) -> dict:
    return {"frame": frame, "track_id": track_id, "quad": quad_list(q), "score": float(score)}


def read_trajectories(path) -> list[dict]:
    out = []
    seen = set()
    for n, r in read_jsonl(path):
        where = f"{path}:{n}"
        f = _field(r, "frame", where, int)
        tid = _field(r, "track_id", where, int)
        if (f, tid) in seen:
            raise DataError(f"{where}: track {tid} appears twice in frame {f}")
        seen.add((f, tid))
        q = _quad(r, where)
        out.append({"frame": f, "track_id": tid, "quad": quad_list(q), "score": float(r.get("score", 1.0))})
    return out


def gt_record(frame: int, gid: int, q: Quad) -> dict:
    return {"frame": frame, "id": gid, "quad": quad_list(q)}


def read_gt(path) -> list[GtTrack]:
    """Ground-truth tracks; an id repeated within a frame aborts."""
    tracks: dict[int, GtTrack] = {}
    for n, r in read_jsonl(path):
        where = f"{path}:{n}"
        f = _field(r, "frame", where, int)
        gid = _field(r, "id", where, int)
        t = tracks.setdefault(gid, GtTrack(gid))
        if f in t.quads:
            raise DataError(f"{where}: id collision, GT id {gid} appears twice in frame {f}")
        t.quads[f] = _quad(r, where)
    return [tracks[k] for k in sorted(tracks)]


def gt_frames(tracks: Iterable[GtTrack]) -> dict[int, list[Quad]]:
    out: dict[int, list[Quad]] = {}
    for t in tracks:
        for f, q in t.quads.items():
            out.setdefault(f, []).append(q)
    return out


def descriptor_record(frame: int, index: int, agd: np.ndarray) -> dict:
    return {"frame": frame, "proposal_index": index, "agd": [float(v) for v in np.asarray(agd).ravel()]}
