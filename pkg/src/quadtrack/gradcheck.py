"""Central finite-difference checks of the tape's analytic gradients."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import losses
from . import tensor_core as tc
from .descriptor import geometry_embed
from .recurrent import gru_step
from .tensor_core import ParameterSet, Tape, Tensor

EPS = 1e-3
TOLERANCE = 1e-4

# random instances are redrawn when a kink (relu at 0, hinge at the margin)
# lies this close: central differences are meaningless across a kink
RELU_GUARD = 0.02
HINGE_GUARD = 0.02

Builder = Callable[[Sequence[Tensor]], Tensor]


@dataclass(frozen=True)
class GradCheckResult:
    name: str
    max_rel_err: float
    passed: bool
    instances: int = 1


def analytic_gradient(build: Builder, arrays: Sequence[np.ndarray]) -> tuple[float, list[np.ndarray]]:
    tape = Tape()
    ts = [tape.watch(Tensor(a, dtype=np.float64)) for a in arrays]
    root = build(ts)
    g = tape.backward(root)
    return root.item(), [np.array(g[t]) for t in ts]


def numeric_gradient(build: Builder, arrays: Sequence[np.ndarray], eps: float = EPS) -> list[np.ndarray]:
    base = [np.array(a, dtype=np.float64) for a in arrays]
    grads = []
    for k, a in enumerate(base):
        g = np.zeros_like(a)
        flat = a.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            fp = build([Tensor(x, dtype=np.float64) for x in base]).item()
            flat[i] = orig - eps
            fm = build([Tensor(x, dtype=np.float64) for x in base]).item()
            flat[i] = orig
            g.reshape(-1)[i] = (fp - fm) / (2 * eps)
        grads.append(g)
    return grads


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """``max|a - n| / max(max|a|, max|n|)`` over one gradient tensor.

    Normalising by the tensor's scale rather than per entry keeps entries
    whose true gradient is ~0 from turning O(eps^2) truncation into a
    spurious failure.
    """
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    if a.size == 0:
        return 0.0
    scale = max(float(np.max(np.abs(a))), float(np.max(np.abs(n))))
    if scale == 0.0:
        return 0.0
    return float(np.max(np.abs(a - n)) / scale)


def check(name: str, build: Builder, arrays: Sequence[np.ndarray], eps: float = EPS,
          tol: float = TOLERANCE, perturb: float = 0.0) -> GradCheckResult:
    _, ga = analytic_gradient(build, arrays)
    if perturb:
        ga = [g * (1.0 + perturb) + perturb for g in ga]
    gn = numeric_gradient(build, arrays, eps)
    err = max(relative_error(a, n) for a, n in zip(ga, gn))
    return GradCheckResult(name, err, err < tol)


# --------------------------------------------------------------------------
# the suite


def _clear_of_margin(A: np.ndarray, B: np.ndarray, margin: float) -> bool:
    """True when no pair distance sits within the hinge guard band."""
    d = np.linalg.norm(A[:, None, :] - B[None, :, :], axis=2)
    return bool(np.all(np.abs(d - margin) > HINGE_GUARD) and np.all(d > HINGE_GUARD))


def _params_from(names, ts) -> ParameterSet:
    return ParameterSet(zip(names, ts))


def _cases(rng: np.random.Generator):
    """Yield (name, builder, arrays) for one random instance of every check."""
    u = lambda *shape: rng.uniform(-1, 1, shape)  # noqa: E731

    yield "matmul", lambda t: tc.sum_all(tc.matmul(t[0], t[1])), [u(4, 5), u(5, 3)]
    for kind in ("sigmoid", "tanh"):
        yield kind, lambda t, k=kind: tc.sq_norm(tc.activation(t[0], k)), [u(3, 4)]
    # keep relu inputs away from the kink
    x = u(3, 4)
    x = np.where(np.abs(x) < 0.05, 0.1, x)
    yield "relu", lambda t: tc.sq_norm(tc.relu(t[0])), [x]
    yield "concat", lambda t: tc.sq_norm(tc.mul(tc.concat([t[0], t[1]], 0), t[2])), [u(3), u(2), u(5)]
    yield "norm", lambda t: tc.norm(t[0]), [u(6)]

    pred = rng.uniform(0.05, 0.95, (6, 7))
    gt = (rng.uniform(size=(6, 7)) < 0.4).astype(float)
    gt[0, 0] = 1.0
    yield "dice_loss", lambda t: losses.dice_loss(t[0], tc.as_tensor(gt, np.float64)), [pred]

    P = 9
    off_gt = rng.uniform(-8, 8, (8, P))
    off_pred = off_gt + rng.uniform(-6, 6, (8, P))
    nrm = rng.uniform(2, 6, P)
    yield "smooth_l1", lambda t: losses.smooth_l1_offsets(t[0], tc.as_tensor(off_gt, np.float64), nrm), [off_pred]

    w = losses.LossWeights()

    def det(t):
        lc = losses.dice_loss(t[0], tc.as_tensor(gt, np.float64))
        lo = losses.smooth_l1_offsets(t[1], tc.as_tensor(off_gt, np.float64), nrm)
        return losses.detection_loss(lc, lo, w)

    yield "detection_loss", det, [pred.copy(), off_pred.copy()]

    K, D = 5, 6
    y = np.eye(K)[rng.permutation(K)]
    while True:
        A = rng.uniform(-0.5, 0.5, (K, D))
        B = rng.uniform(-0.5, 0.5, (K, D))
        if _clear_of_margin(A, B, w.margin):
            break
    yield "contrastive_loss", lambda t: losses.contrastive_track_loss(t[0], t[1], y, w), [A, B]

    frames = 2

    def total(t):
        dets, tracks = [], []
        for f in range(frames):
            lc = losses.dice_loss(t[2 * f], tc.as_tensor(gt, np.float64))
            dets.append(losses.detection_loss(lc, tc.sq_norm(t[2 * f + 1]), w))
            tracks.append(losses.contrastive_track_loss(t[2 * f + 1], tc.as_tensor(B, np.float64), y, w))
        return losses.total_loss(dets, tracks, w)

    arrs = []
    for _ in range(frames):
        arrs += [rng.uniform(0.05, 0.95, (6, 7)), rng.uniform(-0.5, 0.5, (K, D))]
    yield "total_loss", total, arrs

    d = 6
    gru_names = ["W_z", "W_r", "W_h", "b_z", "b_r", "b_h"]
    gru_arrays = [u(d, 2 * d), u(d, 2 * d), u(d, 2 * d), u(d), u(d), u(d)]
    xv, hv = u(d), u(d)

    def gru(t):
        p = _params_from(gru_names, t[2:])
        h, _ = gru_step(t[0], t[1], p)
        return tc.sq_norm(h)

    yield "gru_step", gru, [xv, hv] + gru_arrays

    # geometry embedding -> AGD -> GRU -> contrastive, the trainable path
    emb_names = ["fc1_w", "fc1_b", "fc2_w", "fc2_b"]
    n_app, B3 = 2, 3
    D2 = n_app + 8
    y3 = np.eye(B3)
    while True:
        emb_arrays = [u(16, 8), u(16), u(8, 16), u(8)]
        app = u(n_app, B3) * 0.5
        g_prev = rng.uniform(0, 1, (8, B3))
        g_cur = g_prev + rng.uniform(-0.05, 0.05, (8, B3))
        path_gru = [u(D2, 2 * D2) * 0.5, u(D2, 2 * D2) * 0.5, u(D2, 2 * D2) * 0.5, u(D2), u(D2), u(D2)]
        pre = np.concatenate([emb_arrays[0] @ g + emb_arrays[1][:, None] for g in (g_prev, g_cur)], axis=1)
        if np.min(np.abs(pre)) < RELU_GUARD:
            continue
        emb = ParameterSet((n, Tensor(a, dtype=np.float64)) for n, a in zip(emb_names, emb_arrays))
        gp = ParameterSet((n, Tensor(a, dtype=np.float64)) for n, a in zip(gru_names, path_gru))
        a_prev = np.concatenate([app, geometry_embed(tc.as_tensor(g_prev, np.float64), emb).data])
        a_cur = np.concatenate([app, geometry_embed(tc.as_tensor(g_cur, np.float64), emb).data])
        h, _ = gru_step(tc.as_tensor(a_prev, np.float64), tc.zeros((D2, B3), np.float64), gp)
        if _clear_of_margin(h.data.T, a_cur.T, w.margin):
            break

    # both frames go through the embedding as one column batch
    g_both = tc.as_tensor(np.concatenate([g_prev, g_cur], axis=1), np.float64)
    app_t = tc.as_tensor(app, np.float64)
    h0 = tc.zeros((D2, B3), np.float64)

    def path(t):
        emb = _params_from(emb_names, t[:4])
        gp = _params_from(gru_names, t[4:])
        f_g = geometry_embed(g_both, emb)
        a_prev = tc.concat([app_t, tc.slice_axis(f_g, 0, B3, axis=1)], 0)
        a_cur = tc.concat([app_t, tc.slice_axis(f_g, B3, 2 * B3, axis=1)], 0)
        h, _ = gru_step(a_prev, h0, gp)
        return losses.contrastive_track_loss(tc.transpose(h), tc.transpose(a_cur), y3, w)

    yield "embed_gru_path", path, emb_arrays + path_gru


def run_suite(seed: int = 0, instances: int = 20, eps: float = EPS, tol: float = TOLERANCE,
              perturb: float = 0.0, only: Sequence[str] | None = None) -> list[GradCheckResult]:
    """Run every check on ``instances`` seeded random instances; worst error per check."""
    worst: dict[str, float] = {}
    for k in range(instances):
        rng = np.random.default_rng([seed, k])
        for name, build, arrays in _cases(rng):
            if only and name not in only:
                continue
            r = check(name, build, arrays, eps, tol, perturb)
            worst[name] = max(worst.get(name, 0.0), r.max_rel_err)
    return [GradCheckResult(n, e, e < tol, instances) for n, e in worst.items()]


def format_table(results: Sequence[GradCheckResult]) -> str:
    lines = [f"{'check':<20} {'max_rel_err':>12}  status"]
    for r in results:
        lines.append(f"{r.name:<20} {r.max_rel_err:>12.3e}  {'PASS' if r.passed else 'FAIL'}")
    return "\n".join(lines)
