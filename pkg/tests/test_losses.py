import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from quadtrack import tensor_core as tc
from quadtrack.errors import GeometryError, ShapeError, UsageError
from quadtrack.losses import (LossWeights, check_pair_labels, contrastive_track_loss, detection_loss, dice_loss,
                              smooth_l1_offsets, total_loss)
from quadtrack.tensor_core import Tape, Tensor

from oracles import contrastive_loop, fd_gradient, max_rel_err, smooth_l1_loop

F64 = np.float64


def T(a):
    return Tensor(a, dtype=F64)


def grads(fn, *arrays):
    tape = Tape()
    ts = [tape.watch(T(a)) for a in arrays]
    g = tape.backward(fn(*ts))
    return [g[t] for t in ts]


# ---- dice ------------------------------------------------------------------------------


def test_dice_examples():
    gt = np.zeros((6, 6))
    gt[1:4, 2:5] = 1
    assert dice_loss(gt, gt).item() == pytest.approx(0.0, abs=1e-5)
    assert dice_loss(1 - gt, gt).item() == pytest.approx(1.0, abs=1e-5)
    half = np.zeros((4, 4))
    half[:2] = 1
    assert dice_loss(np.full((4, 4), 0.5), half).item() == pytest.approx(0.5, abs=1e-6)
    with pytest.raises(ShapeError):
        dice_loss(np.zeros((2, 3)), np.zeros((3, 2)))


@given(st.integers(0, 10_000))
def test_dice_range_and_gradient(seed):
    r = np.random.default_rng(seed)
    pred = r.uniform(0.05, 0.95, (3, 4))
    gt = (r.uniform(size=(3, 4)) > 0.5).astype(F64)
    v = dice_loss(T(pred), T(gt)).item()
    assert -1e-9 <= v <= 1 + 1e-6
    (gp, _) = grads(dice_loss, pred, gt)
    (num,) = fd_gradient(lambda p: 1 - 2 * (p * gt).sum() / (p.sum() + gt.sum() + 1e-6), [pred])
    assert max_rel_err(gp, num) < 1e-4


# ---- smooth L1 -------------------------------------------------------------------------


def test_smooth_l1_examples():
    gt = np.arange(24, dtype=F64).reshape(8, 3)
    norm = np.array([2.0, 3.0, 4.0])
    assert smooth_l1_offsets(gt, gt, norm).item() == 0.0
    pred = gt.copy()
    pred[5, 1] += 3.0  # d = 1 exactly
    assert smooth_l1_offsets(pred, gt, norm).item() == pytest.approx(0.5 / 24)
    with pytest.raises(GeometryError):
        smooth_l1_offsets(gt, gt, np.array([1.0, 0.0, 1.0]))
    with pytest.raises(ShapeError):
        smooth_l1_offsets(gt, gt, np.ones(2))


def test_smooth_l1_matches_loops_and_gradient():
    r = np.random.default_rng(7)
    pred, gt = r.normal(0, 6, (8, 5)), r.normal(0, 6, (8, 5))
    norm = r.uniform(2, 8, 5)
    assert smooth_l1_offsets(T(pred), T(gt), norm).item() == pytest.approx(smooth_l1_loop(pred, gt, norm), abs=1e-6)
    d = np.abs((pred - gt) / norm)
    assert np.abs(d - 1).min() > 1e-3
    g = grads(lambda a, b: smooth_l1_offsets(a, b, norm), pred, gt)
    num = fd_gradient(lambda a, b: smooth_l1_loop(a, b, norm), [pred, gt])
    for a, n in zip(g, num):
        assert max_rel_err(a, n) < 1e-4


# ---- detection / total -----------------------------------------------------------------


def test_detection_loss_examples():
    assert detection_loss(0.2, 0.1).item() == pytest.approx(0.7, abs=1e-6)
    assert detection_loss(0.2, 0.1, LossWeights(alpha=0)).item() == pytest.approx(0.2, abs=1e-7)
    gc, go = grads(lambda c, o: detection_loss(c, o), np.array([0.2]), np.array([0.1]))
    assert gc[0] == pytest.approx(1.0) and go[0] == pytest.approx(5.0)


def test_total_loss_examples():
    assert total_loss([0.7], [1.0]).item() == pytest.approx(0.8, abs=1e-6)
    assert total_loss([0.7, 0.3], [1.0, 2.0], LossWeights(beta=0)).item() == pytest.approx(0.5, abs=1e-6)
    assert total_loss([0.7, 0.7], [1.0, 1.0]).item() == pytest.approx(total_loss([0.7], [1.0]).item(), abs=1e-7)
    with pytest.raises(UsageError):
        total_loss([], [])
    with pytest.raises(UsageError):
        total_loss([0.1], [0.1, 0.2])


@given(st.lists(st.tuples(st.floats(0, 5), st.floats(0, 5)), min_size=1, max_size=6), st.randoms())
def test_total_loss_frame_order_irrelevant(frames, rnd):
    shuffled = frames[:]
    rnd.shuffle(shuffled)
    a = total_loss([T(d) for d, _ in frames], [T(t) for _, t in frames]).item()
    b = total_loss([T(d) for d, _ in shuffled], [T(t) for _, t in shuffled]).item()
    assert a == pytest.approx(b, rel=1e-12, abs=1e-12)
    assert a >= 0


def test_weight_validation():
    with pytest.raises(UsageError):
        LossWeights(alpha=-1)
    with pytest.raises(UsageError):
        LossWeights(margin=0)


# ---- contrastive -----------------------------------------------------------------------


def test_contrastive_examples():
    a = np.zeros((1, 4))
    b = np.array([[0.3, 0, 0, 0]])
    assert contrastive_track_loss(a, b, [[1]]).item() == pytest.approx(0.09, abs=1e-7)
    assert contrastive_track_loss(a, b, [[0]]).item() == pytest.approx(0.49, abs=1e-7)
    A = np.array([[0.0, 0.0], [5.0, 0.0]])
    assert contrastive_track_loss(A, A.copy(), np.eye(2)).item() == 0.0


def test_contrastive_label_and_shape_errors():
    A = np.zeros((2, 3))
    with pytest.raises(ShapeError):
        contrastive_track_loss(A, np.zeros((2, 4)), np.eye(2))
    with pytest.raises(ShapeError):
        contrastive_track_loss(A, np.zeros((3, 3)), np.eye(2))
    with pytest.raises(UsageError):
        check_pair_labels(np.ones((2, 2)))
    with pytest.raises(UsageError):
        check_pair_labels(np.full((2, 2), 0.5))


def test_contrastive_matches_loops_and_gradient():
    r = np.random.default_rng(11)
    while True:
        A, B = r.normal(0, 0.4, (5, 6)), r.normal(0, 0.4, (5, 6))
        d = np.linalg.norm(A[:, None] - B[None], axis=2)
        if np.abs(d - 1).min() > 0.02:
            break
    Y = np.eye(5)[r.permutation(5)]
    Y[4] = 0  # one unmatched tracklet
    assert contrastive_track_loss(T(A), T(B), Y).item() == pytest.approx(contrastive_loop(A, B, Y, 1.0), abs=1e-10)
    g = grads(lambda a, b: contrastive_track_loss(a, b, Y), A, B)
    num = fd_gradient(lambda a, b: contrastive_loop(a, b, Y, 1.0), [A, B])
    for a, n in zip(g, num):
        assert max_rel_err(a, n) < 1e-4


def test_hinge_region_has_zero_gradient():
    A = np.array([[0.0, 0.0]])
    B = np.array([[1.5, 0.2]])
    ga, gb = grads(lambda a, b: contrastive_track_loss(a, b, [[0]]), A, B)
    assert np.array_equal(ga, np.zeros_like(A)) and np.array_equal(gb, np.zeros_like(B))


@given(st.integers(0, 10_000))
def test_contrastive_zero_iff_separated(seed):
    r = np.random.default_rng(seed)
    k = int(r.integers(1, 5))
    A = np.arange(k)[:, None] * np.array([[2.0, 0.0]])
    perm = r.permutation(k)
    Y = np.eye(k)[perm]
    B = Y.T @ A  # B[j] = A[i] whenever (i, j) is a positive pair
    assert contrastive_track_loss(A, B, Y).item() == 0.0
    B2 = B.copy()
    B2[0, 1] += 0.1
    assert contrastive_track_loss(A, B2, Y).item() > 0


@given(st.integers(0, 10_000))
def test_contrastive_permutation_invariant(seed):
    r = np.random.default_rng(seed)
    A, B = r.normal(size=(4, 3)), r.normal(size=(4, 3))
    Y = np.eye(4)[r.permutation(4)]
    p, q = r.permutation(4), r.permutation(4)
    base = contrastive_track_loss(A, B, Y).item()
    assert contrastive_track_loss(A[p], B[q], Y[np.ix_(p, q)]).item() == pytest.approx(base, rel=1e-6)
    assert base >= 0
