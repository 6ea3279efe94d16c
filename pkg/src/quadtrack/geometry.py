"""Quadrangle geometry: areas, IoU, NMS, dense target encode/decode, homography.

Coordinates are image pixels with y pointing down.  A quad's canonical
vertex order is clockwise on screen starting top-left, which is a positive
shoelace area in these coordinates.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import GeometryError, ShapeError
from .tensor_core import Tensor

log = logging.getLogger(__name__)

AREA_EPS = 1e-12
DEFAULT_NMS_IOU = 0.2
DEFAULT_STRIDE = 4.0


class Quad:
    """Four (x, y) vertices plus an optional confidence score."""

    __slots__ = ("pts", "score")

    def __init__(self, pts, score: float | None = None):
        arr = np.array(pts, dtype=np.float64).reshape(4, 2)
        arr.setflags(write=False)
        self.pts = arr
        self.score = None if score is None else float(score)

    @classmethod
    def from_flat(cls, values: Sequence[float], score: float | None = None) -> "Quad":
        if len(values) != 8:
            raise ShapeError(f"a quad needs 8 coordinates, got {len(values)}")
        return cls(np.asarray(values, dtype=np.float64).reshape(4, 2), score)

    @classmethod
    def box(cls, x0: float, y0: float, x1: float, y1: float, score: float | None = None) -> "Quad":
        """Axis-aligned rectangle, canonical vertex order."""
        return cls([(x0, y0), (x1, y0), (x1, y1), (x0, y1)], score)

    def flat(self) -> list[float]:
        return [float(v) for v in self.pts.reshape(-1)]

    @property
    def area(self) -> float:
        return abs(signed_area(self.pts))

    def with_score(self, score: float | None) -> "Quad":
        return Quad(self.pts, score)

    def scaled(self, s: float) -> "Quad":
        return Quad(self.pts * s, self.score)

    def translated(self, dx: float, dy: float) -> "Quad":
        return Quad(self.pts + np.array([dx, dy]), self.score)

    def validate(self) -> "Quad":
        validate_quad(self.pts)
        return self

    def __eq__(self, other):
        if not isinstance(other, Quad):
            return NotImplemented
        return np.array_equal(self.pts, other.pts) and self.score == other.score

    def __hash__(self):
        return hash((self.pts.tobytes(), self.score))

    def __repr__(self):
        s = "" if self.score is None else f", score={self.score:.4g}"
        return f"Quad({np.round(self.pts, 3).tolist()}{s})"


def _pts(q) -> np.ndarray:
    return q.pts if isinstance(q, Quad) else np.asarray(q, dtype=np.float64).reshape(-1, 2)


def signed_area(poly) -> float:
    p = _pts(poly)
    x, y = p[:, 0], p[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def polygon_area(poly) -> float:
    return abs(signed_area(poly)) if len(poly) >= 3 else 0.0


def is_convex(poly) -> bool:
    p = _pts(poly)
    d1 = np.roll(p, -1, axis=0) - p
    d2 = np.roll(p, -2, axis=0) - np.roll(p, -1, axis=0)
    cross = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    tol = 1e-12 * max(1.0, float(np.abs(p).max()) ** 2)
    return bool(np.all(cross >= -tol) or np.all(cross <= tol))


def validate_quad(pts) -> None:
    p = _pts(pts)
    if p.shape != (4, 2) or not np.all(np.isfinite(p)):
        raise GeometryError(f"a quad needs 4 finite vertices, got {p.tolist()}")
    if abs(signed_area(p)) <= AREA_EPS:
        raise GeometryError(f"degenerate quad (zero area): {p.tolist()}")
    if not is_convex(p):
        raise GeometryError(f"quad is not convex: {p.tolist()}")


def _ccw(p: np.ndarray) -> np.ndarray:
    return p if signed_area(p) >= 0 else p[::-1]


def clip_convex(subject: list, clip: list) -> list:
    """Sutherland-Hodgman: clip ``subject`` by convex ``clip`` (both positive area)."""
    out = list(subject)
    n = len(clip)
    for k in range(n):
        if not out:
            break
        ax, ay = clip[k]
        bx, by = clip[(k + 1) % n]
        ex, ey = bx - ax, by - ay
        inp = out
        out = []
        sx, sy = inp[-1]
        ds = ex * (sy - ay) - ey * (sx - ax)
        for px, py in inp:
            dp = ex * (py - ay) - ey * (px - ax)
            if dp >= 0:
                if ds < 0:
                    t = ds / (ds - dp)
                    out.append((sx + (px - sx) * t, sy + (py - sy) * t))
                out.append((px, py))
            elif ds >= 0:
                t = ds / (ds - dp)
                out.append((sx + (px - sx) * t, sy + (py - sy) * t))
            sx, sy, ds = px, py, dp
    return out


def _shoelace(poly: list) -> float:
    s = 0.0
    n = len(poly)
    for i in range(n):
        x0, y0 = poly[i]
        x1, y1 = poly[(i + 1) % n]
        s += x0 * y1 - x1 * y0
    return abs(s) * 0.5


def quad_iou(a, b) -> float:
    """Exact IoU of two convex quads via polygon clipping."""
    pa, pb = _pts(a), _pts(b)
    validate_quad(pa)
    validate_quad(pb)
    pa, pb = _ccw(pa), _ccw(pb)
    area_a = abs(signed_area(pa))
    area_b = abs(signed_area(pb))
    inter = _shoelace(clip_convex([tuple(v) for v in pa.tolist()], [tuple(v) for v in pb.tolist()]))
    union = area_a + area_b - inter
    if union <= 0:
        return 0.0
    return float(min(1.0, max(0.0, inter / union)))


def _batch_area(P: np.ndarray, valid: np.ndarray) -> np.ndarray:
    """Shoelace area of compacted polygons (valid points first in each row)."""
    n = valid.sum(axis=1)
    m = P.shape[1]
    j = np.arange(m)[None, :]
    nxt = np.where(j + 1 < n[:, None], j + 1, 0)
    Q = np.take_along_axis(P, nxt[..., None].repeat(2, axis=2), axis=1)
    cross = P[..., 0] * Q[..., 1] - Q[..., 0] * P[..., 1]
    cross = np.where(valid, cross, 0.0)
    return np.abs(cross.sum(axis=1)) * 0.5


def quad_iou_many(q, others: np.ndarray) -> np.ndarray:
    """IoU of one convex quad against an [N x 4 x 2] stack, vectorised.

    Same clipping rule as :func:`quad_iou`; the stack is assumed valid.
    """
    clip = _ccw(_pts(q))
    others = np.asarray(others, dtype=np.float64).reshape(-1, 4, 2)
    N = others.shape[0]
    if N == 0:
        return np.zeros(0)
    sa = 0.5 * (np.einsum("ni,ni->n", others[..., 0], np.roll(others[..., 1], -1, axis=1))
                - np.einsum("ni,ni->n", np.roll(others[..., 0], -1, axis=1), others[..., 1]))
    P = np.where((sa < 0)[:, None, None], others[:, ::-1], others)
    area_o = np.abs(sa)
    valid = np.ones((N, 4), dtype=bool)
    for k in range(4):
        a = clip[k]
        e = clip[(k + 1) % 4] - a
        m = P.shape[1]
        n = valid.sum(axis=1)
        j = np.arange(m)[None, :]
        prev = np.where(j == 0, n[:, None] - 1, j - 1)
        prev = np.maximum(prev, 0)
        S = np.take_along_axis(P, prev[..., None].repeat(2, axis=2), axis=1)
        dp = e[0] * (P[..., 1] - a[1]) - e[1] * (P[..., 0] - a[0])
        ds = e[0] * (S[..., 1] - a[1]) - e[1] * (S[..., 0] - a[0])
        pin = dp >= 0
        sin = ds >= 0
        cross_edge = valid & (pin != sin)
        denom = np.where(cross_edge, ds - dp, 1.0)
        t = ds / denom
        I = S + (P - S) * t[..., None]
        # per input vertex: [intersection?, vertex?]
        out = np.stack([I, P], axis=2).reshape(N, 2 * m, 2)
        ok = np.stack([cross_edge, valid & pin], axis=2).reshape(N, 2 * m)
        order = np.argsort(~ok, axis=1, kind="stable")
        P = np.take_along_axis(out, order[..., None].repeat(2, axis=2), axis=1)
        valid = np.take_along_axis(ok, order, axis=1)
        width = max(int(valid.sum(axis=1).max()), 1)
        P = P[:, :width]
        valid = valid[:, :width]
    inter = _batch_area(P, valid)
    inter = np.where(valid.sum(axis=1) >= 3, inter, 0.0)
    union = abs(signed_area(clip)) + area_o - inter
    iou = np.where(union > 0, inter / np.where(union > 0, union, 1.0), 0.0)
    return np.clip(iou, 0.0, 1.0)


def _aabb(stack: np.ndarray) -> np.ndarray:
    return np.concatenate([stack.min(axis=1), stack.max(axis=1)], axis=1)


def nms_indices(quads: np.ndarray, scores: np.ndarray, iou_thresh: float = DEFAULT_NMS_IOU) -> list[int]:
    """Greedy NMS over an [N x 4 x 2] stack; returns kept indices in keep order."""
    quads = np.asarray(quads, dtype=np.float64).reshape(-1, 4, 2)
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    if quads.shape[0] == 0:
        return []
    order = np.argsort(-scores, kind="stable")
    alive = np.ones(len(order), dtype=bool)
    boxes = _aabb(quads[order])
    stack = quads[order]
    kept = []
    for pos in range(len(order)):
        if not alive[pos]:
            continue
        kept.append(int(order[pos]))
        rest = np.nonzero(alive[pos + 1:])[0] + pos + 1
        if rest.size == 0:
            break
        bx = boxes[pos]
        touch = ((boxes[rest, 0] <= bx[2]) & (boxes[rest, 2] >= bx[0])
                 & (boxes[rest, 1] <= bx[3]) & (boxes[rest, 3] >= bx[1]))
        cand = rest[touch]
        if cand.size:
            ious = quad_iou_many(stack[pos], stack[cand])
            alive[cand[ious > iou_thresh]] = False
    return kept


def nms(proposals: Sequence[Quad], iou_thresh: float = DEFAULT_NMS_IOU) -> list[Quad]:
    """Greedy score-descending suppression; ties keep the earlier input."""
    if not proposals:
        return []
    for q in proposals:
        if q.score is None:
            raise GeometryError("nms needs scored proposals")
    stack = np.stack([q.pts for q in proposals])
    scores = np.array([q.score for q in proposals])
    return [proposals[i] for i in nms_indices(stack, scores, iou_thresh)]


# --------------------------------------------------------------------------
# dense detection targets


@dataclass(frozen=True)
class DetectionMaps:
    """Score map [1 x H x W] and vertex offsets [8 x H x W] at map scale.

    ``norm`` (optional, [H x W]) is the shortest edge of the quad that
    owns each positive pixel, in map pixels; it feeds the offset loss.
    """

    score: Tensor
    offsets: Tensor
    norm: np.ndarray | None = None

    def __post_init__(self):
        if self.score.data.ndim != 3 or self.score.shape[0] != 1:
            raise ShapeError(f"score map must be [1 x H x W], got {self.score.shape}")
        if self.offsets.shape != (8,) + self.score.shape[1:]:
            raise ShapeError(f"offsets must be [8 x H x W], got {self.offsets.shape}")

    @property
    def height(self) -> int:
        return self.score.shape[1]

    @property
    def width(self) -> int:
        return self.score.shape[2]

    def stacked(self) -> Tensor:
        """Single [9 x H x W] tensor: score channel then 8 offsets."""
        return Tensor(np.concatenate([self.score.data, self.offsets.data], axis=0), dtype=self.score.dtype)

    @classmethod
    def from_stacked(cls, t: Tensor) -> "DetectionMaps":
        if t.data.ndim != 3 or t.shape[0] != 9:
            raise ShapeError(f"detection maps must be [9 x H x W], got {t.shape}")
        return cls(Tensor(t.data[:1], dtype=t.dtype), Tensor(t.data[1:], dtype=t.dtype))


def points_in_convex(pts, xs: np.ndarray, ys: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """Boolean mask of points (boundary inclusive) inside a convex polygon."""
    p = _ccw(_pts(pts))
    inside = np.ones(np.broadcast(xs, ys).shape, dtype=bool)
    n = len(p)
    for k in range(n):
        a = p[k]
        e = p[(k + 1) % n] - a
        inside &= e[0] * (ys - a[1]) - e[1] * (xs - a[0]) >= -tol
    return inside


def shrink_quad(pts, shrink: float) -> np.ndarray:
    """Scale a polygon about its vertex centroid by ``1 - shrink``."""
    p = _pts(pts)
    c = p.mean(axis=0)
    return c + (p - c) * (1.0 - shrink)


def shortest_edge(pts) -> float:
    p = _pts(pts)
    return float(np.min(np.linalg.norm(np.roll(p, -1, axis=0) - p, axis=1)))


def encode_targets(gt: Iterable[Quad], map_h: int, map_w: int, scale: float = DEFAULT_STRIDE,
                   shrink: float = 0.0, dtype=np.float32) -> DetectionMaps:
    """Rasterise GT quads into score/offset maps.

    A map pixel (column j, row i) sits at map point (j, i), i.e. image point
    (j * scale, i * scale).  It is positive when inside the quad (shrunk
    about its centroid by ``shrink``); its offsets point to the unshrunk
    vertices.  Later quads overwrite earlier ones where they overlap.
    """
    if scale <= 0:
        raise GeometryError(f"scale must be positive, got {scale}")
    if not 0.0 <= shrink < 1.0:
        raise GeometryError(f"shrink must be in [0, 1), got {shrink}")
    score = np.zeros((1, map_h, map_w), dtype=np.float64)
    offsets = np.zeros((8, map_h, map_w), dtype=np.float64)
    norm = np.zeros((map_h, map_w), dtype=np.float64)
    ys, xs = np.mgrid[0:map_h, 0:map_w].astype(np.float64)
    for q in gt:
        validate_quad(q.pts)
        mc = q.pts / scale
        region = shrink_quad(mc, shrink) if shrink > 0 else mc
        lo = np.floor(region.min(axis=0)).astype(int)
        hi = np.ceil(region.max(axis=0)).astype(int)
        x0, y0 = max(lo[0], 0), max(lo[1], 0)
        x1, y1 = min(hi[0], map_w - 1), min(hi[1], map_h - 1)
        if x0 > x1 or y0 > y1:
            continue
        sub_x = xs[y0:y1 + 1, x0:x1 + 1]
        sub_y = ys[y0:y1 + 1, x0:x1 + 1]
        mask = points_in_convex(region, sub_x, sub_y)
        if not mask.any():
            continue
        score[0, y0:y1 + 1, x0:x1 + 1][mask] = 1.0
        for k in range(4):
            offsets[2 * k, y0:y1 + 1, x0:x1 + 1][mask] = mc[k, 0] - sub_x[mask]
            offsets[2 * k + 1, y0:y1 + 1, x0:x1 + 1][mask] = mc[k, 1] - sub_y[mask]
        norm[y0:y1 + 1, x0:x1 + 1][mask] = shortest_edge(mc)
    return DetectionMaps(Tensor(score, dtype=dtype), Tensor(offsets, dtype=dtype), norm)


def decode_arrays(maps: DetectionMaps, theta_l: float, scale: float = DEFAULT_STRIDE):
    """Vectorised decode: ``(quads [N x 4 x 2], scores [N], skipped)``.

    Proposals come out in row-major pixel order.
    """
    s = maps.score.data[0]
    ii, jj = np.nonzero(s >= theta_l)
    off = maps.offsets.data[:, ii, jj].astype(np.float64).T  # N x 8
    ok = np.all(np.isfinite(off), axis=1)
    skipped = int((~ok).sum())
    ii, jj, off = ii[ok], jj[ok], off[ok]
    base = np.stack([jj, ii], axis=1).astype(np.float64)
    quads = (base[:, None, :] + off.reshape(-1, 4, 2)) * scale
    scores = s[ii, jj].astype(np.float64)
    return quads, scores, skipped


def decode_proposals(maps: DetectionMaps, theta_l: float, scale: float = DEFAULT_STRIDE) -> list[Quad]:
    """Every pixel with score >= ``theta_l`` becomes one scored quad (pre-NMS)."""
    quads, scores, skipped = decode_arrays(maps, theta_l, scale)
    if skipped:
        log.warning("decode_proposals: skipped %d positive pixels with non-finite offsets", skipped)
    return [Quad(q, float(sc)) for q, sc in zip(quads, scores)]


# --------------------------------------------------------------------------
# homography for the ROI transform


@dataclass(frozen=True)
class Homography:
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64).reshape(3, 3)
        if abs(m[2, 2]) < 1e-15:
            raise GeometryError("homography with h33 = 0 cannot be normalised")
        m = m / m[2, 2]
        if abs(np.linalg.det(m)) <= 1e-9:
            raise GeometryError("singular homography")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    def apply(self, pts) -> np.ndarray:
        p = np.asarray(pts, dtype=np.float64).reshape(-1, 2)
        hp = np.concatenate([p, np.ones((len(p), 1))], axis=1) @ self.matrix.T
        return hp[:, :2] / hp[:, 2:3]

    def apply_grid(self, us: np.ndarray, vs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        m = self.matrix
        w = m[2, 0] * us + m[2, 1] * vs + m[2, 2]
        x = (m[0, 0] * us + m[0, 1] * vs + m[0, 2]) / w
        y = (m[1, 0] * us + m[1, 1] * vs + m[1, 2]) / w
        return x, y

    def inverse(self) -> "Homography":
        return Homography(np.linalg.inv(self.matrix))


def _has_collinear_triple(p: np.ndarray) -> bool:
    span = max(1.0, float(np.ptp(p, axis=0).max()))
    for a, b, c in ((0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)):
        u = p[b] - p[a]
        v = p[c] - p[a]
        if abs(u[0] * v[1] - u[1] * v[0]) <= 1e-9 * span * span:
            return True
    return False


def homography_from_quad(q, out_w: int = 64, out_h: int = 8) -> Homography:
    """Perspective map sending the output grid corners onto the quad's vertices.

    Corners (0,0), (w-1,0), (w-1,h-1), (0,h-1) go to vertices 0..3.
    """
    p = _pts(q)
    if p.shape != (4, 2) or not np.all(np.isfinite(p)):
        raise GeometryError(f"homography needs 4 finite vertices, got {p.tolist()}")
    if _has_collinear_triple(p):
        raise GeometryError(f"collinear vertices, singular system: {p.tolist()}")
    src = np.array([(0, 0), (out_w - 1, 0), (out_w - 1, out_h - 1), (0, out_h - 1)], dtype=np.float64)
    A = np.zeros((8, 8))
    rhs = np.zeros(8)
    for k, ((u, v), (x, y)) in enumerate(zip(src, p)):
        A[2 * k] = [u, v, 1, 0, 0, 0, -u * x, -v * x]
        A[2 * k + 1] = [0, 0, 0, u, v, 1, -u * y, -v * y]
        rhs[2 * k] = x
        rhs[2 * k + 1] = y
    try:
        h = np.linalg.solve(A, rhs)
    except np.linalg.LinAlgError as e:
        raise GeometryError(f"singular homography system: {e}") from e
    return Homography(np.append(h, 1.0).reshape(3, 3))
