"""Deliberately naive reference implementations used as test oracles.

Nothing here imports the code under test except plain data types.
"""

import itertools
import math

import numpy as np


def naive_matmul(a, b):
    m, k = a.shape
    k2, n = b.shape
    assert k == k2
    out = np.zeros((m, n))
    for i in range(m):
        for j in range(n):
            s = 0.0
            for t in range(k):
                s += float(a[i, t]) * float(b[t, j])
            out[i, j] = s
    return out


def direct_conv(x, w, b):
    """Six-loop same-padded cross-correlation."""
    c, h, wd = x.shape
    f, _, kh, kw = w.shape
    ph, pw = kh // 2, kw // 2
    out = np.zeros((f, h, wd))
    for o in range(f):
        for i in range(h):
            for j in range(wd):
                s = float(b[o])
                for ci in range(c):
                    for di in range(kh):
                        for dj in range(kw):
                            y, xx = i + di - ph, j + dj - pw
                            if 0 <= y < h and 0 <= xx < wd:
                                s += float(w[o, ci, di, dj]) * float(x[ci, y, xx])
                out[o, i, j] = s
    return out


def bilinear_oracle(fmap, x, y):
    """Four-neighbour bilinear formula with zero outside the map."""
    c, h, w = fmap.shape

    def px(ix, iy):
        if 0 <= ix < w and 0 <= iy < h:
            return fmap[:, iy, ix].astype(np.float64)
        return np.zeros(c)

    x0, y0 = math.floor(x), math.floor(y)
    fx, fy = x - x0, y - y0
    return ((1 - fx) * (1 - fy) * px(x0, y0) + fx * (1 - fy) * px(x0 + 1, y0)
            + (1 - fx) * fy * px(x0, y0 + 1) + fx * fy * px(x0 + 1, y0 + 1))


def sigmoid(v):
    return 1.0 / (1.0 + math.exp(-v))


def scalar_lstm(x, h, c, wx, wh, b):
    """One LSTM step for a single scalar unit; gate order i, f, o, g."""
    i = sigmoid(wx[0] * x + wh[0] * h + b[0])
    f = sigmoid(wx[1] * x + wh[1] * h + b[1])
    o = sigmoid(wx[2] * x + wh[2] * h + b[2])
    g = math.tanh(wx[3] * x + wh[3] * h + b[3])
    c2 = f * c + i * g
    return o * math.tanh(c2), c2


def gru_oracle(x, h, Wz, Wr, Wh, bz, br, bh):
    xh = np.concatenate([x, h])
    z = 1 / (1 + np.exp(-(Wz @ xh + bz)))
    r = 1 / (1 + np.exp(-(Wr @ xh + br)))
    cand = np.tanh(Wh @ np.concatenate([x, r * h]) + bh)
    return (1 - z) * h + z * cand


def permutation_min(cost):
    """Exact minimum over every assignment of a rectangular matrix."""
    cost = np.asarray(cost, dtype=np.float64)
    P, Q = cost.shape
    if P == 0 or Q == 0:
        return 0.0
    best = math.inf
    if P <= Q:
        for cols in itertools.permutations(range(Q), P):
            best = min(best, sum(cost[i, j] for i, j in enumerate(cols)))
    else:
        for rows in itertools.permutations(range(P), Q):
            best = min(best, sum(cost[i, j] for j, i in enumerate(rows)))
    return best


def permutation_argmin(cost):
    """Optimal (row, col) pairs by enumeration; first minimum in enumeration order."""
    cost = np.asarray(cost, dtype=np.float64)
    P, Q = cost.shape
    best, pairs = math.inf, []
    if P <= Q:
        for cols in itertools.permutations(range(Q), P):
            s = math.fsum(cost[i, j] for i, j in enumerate(cols))
            if s < best:
                best, pairs = s, list(enumerate(cols))
    else:
        for rows in itertools.permutations(range(P), Q):
            s = math.fsum(cost[i, j] for j, i in enumerate(rows))
            if s < best:
                best, pairs = s, sorted((i, j) for j, i in enumerate(rows))
    return pairs


def nms_reference(quads, scores, thresh, iou):
    """O(n^2) greedy NMS: visit in descending score (ties by index)."""
    order = sorted(range(len(quads)), key=lambda i: (-scores[i], i))
    kept = []
    for i in order:
        if all(iou(quads[i], quads[k]) <= thresh for k in kept):
            kept.append(i)
    return kept


def contrastive_loop(A, B, Y, m):
    P, Q = Y.shape
    s = 0.0
    for i in range(P):
        for j in range(Q):
            d = math.sqrt(sum((float(A[i, k]) - float(B[j, k])) ** 2 for k in range(A.shape[1])))
            s += d * d if Y[i, j] else max(m - d, 0.0) ** 2
    return s / (P * Q)


def smooth_l1_loop(pred, gt, norm):
    s = 0.0
    n = 0
    for c in range(pred.shape[0]):
        for p in range(pred.shape[1]):
            d = (float(pred[c, p]) - float(gt[c, p])) / float(norm[p])
            s += 0.5 * d * d if abs(d) < 1 else abs(d) - 0.5
            n += 1
    return s / n


def fd_gradient(f, arrays, eps=1e-5):
    """Central differences of a scalar function of several float64 arrays."""
    base = [np.array(a, dtype=np.float64) for a in arrays]
    out = []
    for a in base:
        g = np.zeros_like(a)
        flat, gf = a.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            v = flat[i]
            flat[i] = v + eps
            fp = f(*base)
            flat[i] = v - eps
            fm = f(*base)
            flat[i] = v
            gf[i] = (fp - fm) / (2 * eps)
        out.append(g)
    return out


def max_rel_err(a, n):
    a, n = np.asarray(a, dtype=np.float64), np.asarray(n, dtype=np.float64)
    scale = max(np.abs(a).max(), np.abs(n).max())
    return 0.0 if scale == 0 else float(np.abs(a - n).max() / scale)


def _inside_convex_cw(p, x, y):
    """Point-in-convex-polygon by sign agreement of all edge cross products."""
    signs = []
    for k in range(len(p)):
        ax, ay = p[k]
        bx, by = p[(k + 1) % len(p)]
        signs.append((bx - ax) * (y - ay) - (by - ay) * (x - ax))
    s = np.stack(signs)
    return np.all(s >= 0, axis=0) | np.all(s <= 0, axis=0)


def mc_iou(a, b, samples=100_000, seed=0):
    a, b = np.asarray(a, np.float64), np.asarray(b, np.float64)
    lo = np.minimum(a.min(0), b.min(0))
    hi = np.maximum(a.max(0), b.max(0))
    pts = np.random.default_rng(seed).uniform(lo, hi, (samples, 2))
    ia = _inside_convex_cw(a, pts[:, 0], pts[:, 1])
    ib = _inside_convex_cw(b, pts[:, 0], pts[:, 1])
    u = np.count_nonzero(ia | ib)
    return np.count_nonzero(ia & ib) / u if u else 0.0
