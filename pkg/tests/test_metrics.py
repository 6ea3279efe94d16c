import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from quadtrack.errors import DataError, UsageError
from quadtrack.geometry import Quad
from quadtrack.metrics import GtTrack, detection_prf, hyp_from_records, match_frame, mot_metrics


def sq(x, y=0.0, s=10.0):
    return Quad.box(x, y, x + s, y + s)


def shift_for_iou(iou, s=10.0):
    # two s x s squares offset along x by d overlap with IoU (s - d) / (s + d)
    return s * (1 - iou) / (1 + iou)


# ---- match_frame -----------------------------------------------------------------------


def test_match_frame_examples():
    assert match_frame({1: sq(0)}, {7: sq(0)}, {}) == {1: (7, pytest.approx(1.0))}
    assert match_frame({1: sq(0)}, {7: sq(50)}, {}) == {}
    with pytest.raises(UsageError):
        match_frame({}, {}, {}, iou_thresh=1.0)


def test_persistence_keeps_previous_pair():
    g = sq(0)
    old = sq(shift_for_iou(0.6))
    new = sq(-shift_for_iou(0.7))
    corr = match_frame({1: g}, {10: old, 20: new}, {1: 10})
    assert corr[1][0] == 10 and corr[1][1] == pytest.approx(0.6)
    assert match_frame({1: g}, {10: old, 20: new}, {})[1][0] == 20
    # through mot_metrics: no switch, one FP in frame 1
    rep = mot_metrics([GtTrack(1, {0: g, 1: g})], {0: {10: old}, 1: {10: old, 20: new}})
    assert (rep.idsw, rep.fp, rep.fn) == (0, 1, 0)


# ---- mot_metrics -----------------------------------------------------------------------


def two_tracks(frames=5):
    return [GtTrack(1, {f: sq(10.0 * f) for f in range(frames)}),
            GtTrack(2, {f: sq(10.0 * f, 100) for f in range(frames)})]


def as_hyp(gt, ids=None):
    ids = ids or {}
    hyp = {}
    for t in gt:
        for f, q in t.quads.items():
            hyp.setdefault(f, {})[ids.get(t.id, t.id)] = q
    return hyp


def test_perfect_and_empty():
    gt = two_tracks()
    rep = mot_metrics(gt, as_hyp(gt))
    assert (rep.mota, rep.motp, rep.fp, rep.fn, rep.idsw) == (100.0, pytest.approx(100.0), 0, 0, 0)
    empty = mot_metrics(gt, {f: {} for f in range(5)})
    assert empty.mota == 0.0 and empty.fn == 10 and empty.motp == 0.0 and not empty.motp_defined
    assert "undefined" in empty.summary()


def test_scripted_five_frame_scenario():
    gt = two_tracks()
    hyp = as_hyp(gt)
    hyp[2][3] = hyp[2].pop(1)      # track 1 changes id from frame 2 on
    for f in (3, 4):
        hyp[f][3] = hyp[f].pop(1)
    hyp[1][9] = sq(300, 300)       # false positive
    del hyp[4][2]                  # miss
    rep = mot_metrics(gt, hyp)
    assert (rep.idsw, rep.fp, rep.fn, rep.gt_total) == (1, 1, 1, 10)
    assert rep.mota == pytest.approx(70.0, abs=1e-12)


def test_mot_errors():
    with pytest.raises(UsageError):
        mot_metrics([], {})
    with pytest.raises(DataError):
        mot_metrics(two_tracks(3), {50: {1: sq(0)}})
    with pytest.raises(DataError):
        mot_metrics([GtTrack(1, {0: sq(0)}), GtTrack(1, {0: sq(20)})], {0: {}})


def test_records_input():
    gt = two_tracks(2)
    recs = [{"frame": f, "track_id": tid, "quad": q.flat(), "score": 0.9}
            for f, row in as_hyp(gt).items() for tid, q in row.items()]
    assert mot_metrics(gt, recs).mota == 100.0
    with pytest.raises(DataError):
        hyp_from_records(recs + recs[:1])


@given(st.permutations([1, 2, 3]), st.integers(0, 10_000))
def test_relabel_invariance(perm, seed):
    r = np.random.default_rng(seed)
    gt = [GtTrack(i, {f: sq(40.0 * i + r.uniform(-2, 2), 5.0 * f) for f in range(4)}) for i in (1, 2, 3)]
    hyp = {f: {i: sq(40.0 * i + r.uniform(-4, 4), 5.0 * f) for i in (1, 2, 3) if r.uniform() < 0.8}
           for f in range(4)}
    relabel = dict(zip((1, 2, 3), (100 + p for p in perm)))
    hyp2 = {f: {relabel[i]: q for i, q in row.items()} for f, row in hyp.items()}
    a, b = mot_metrics(gt, hyp), mot_metrics(gt, hyp2)
    assert a.mota == b.mota and a.motp == pytest.approx(b.motp, abs=1e-12)


@given(st.integers(0, 10_000), st.sampled_from(["fp", "fn", "idsw"]))
def test_injected_error_never_raises_mota(seed, kind):
    r = np.random.default_rng(seed)
    gt = two_tracks()
    hyp = as_hyp(gt)
    base = mot_metrics(gt, hyp).mota
    f = int(r.integers(1, 5))
    if kind == "fp":
        hyp[f][99] = sq(500, 500)
    elif kind == "fn":
        del hyp[f][1]
    else:
        for g in range(f, 5):
            hyp[g][50] = hyp[g].pop(1)
    assert mot_metrics(gt, hyp).mota < base


# ---- detection PRF ---------------------------------------------------------------------


def prf(gt, det):
    r = detection_prf(gt, det)
    return r.precision, r.recall, r.f_measure


def test_prf_examples():
    gt = {0: [sq(0), sq(50), sq(100)]}
    assert prf(gt, gt) == (1.0, 1.0, 1.0)
    assert prf(gt, {}) == (0.0, 0.0, 0.0)
    p = detection_prf(gt, {0: [sq(0), sq(50), sq(300)]})
    assert (p.precision, p.recall, p.f_measure) == pytest.approx((2 / 3, 2 / 3, 2 / 3))
    assert prf({}, {}) == (0.0, 0.0, 0.0)


@given(st.integers(0, 10_000))
def test_prf_role_swap(seed):
    r = np.random.default_rng(seed)
    a = {0: [sq(30.0 * k + r.uniform(-5, 5)) for k in range(4)]}
    b = {0: [sq(30.0 * k + r.uniform(-5, 5)) for k in range(int(r.integers(1, 6)))]}
    ab, ba = detection_prf(a, b), detection_prf(b, a)
    assert ab.precision == pytest.approx(ba.recall) and ab.recall == pytest.approx(ba.precision)
