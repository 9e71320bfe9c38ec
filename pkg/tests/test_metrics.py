import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from satgc import metrics


def mann_whitney(scores, labels):
    pos = [s for s, l in zip(scores, labels) if l]
    neg = [s for s, l in zip(scores, labels) if not l]
    wins = sum(1.0 if p > n else 0.5 if p == n else 0.0 for p in pos for n in neg)
    return wins / (len(pos) * len(neg))


def exhaustive_roc(scores, truth):
    s, t = np.ravel(scores), np.ravel(truth).astype(bool)
    P, N = t.sum(), (~t).sum()
    pts = {(0.0, 0.0), (1.0, 1.0)}
    for thr in list(s) + [np.inf]:
        pred = s >= thr
        pts.add((float(np.sum(pred & ~t) / N), float(np.sum(pred & t) / P)))
    return pts


def test_perfect_curve():
    truth = np.array([[1, 0], [0, 1]])
    pts = metrics.roc_curve(truth.astype(float), truth)
    assert (0.0, 1.0) in [p[:2] for p in pts]
    assert metrics.auc(pts) == 1.0


def test_tied_scores():
    pts = metrics.roc_curve(np.full((3, 3), 0.4), np.eye(3))
    assert [p[:2] for p in pts] == [(0.0, 0.0), (1.0, 1.0)]
    assert metrics.auc(pts) == 0.5


def test_degenerate_labels():
    with pytest.raises(metrics.DegenerateLabelsError):
        metrics.roc_curve(np.zeros((2, 2)), np.ones((2, 2)))
    with pytest.raises(metrics.DegenerateLabelsError):
        metrics.roc_curve(np.zeros((2, 2)), np.eye(2), include_diagonal=False)


@pytest.mark.parametrize("seed", range(10))
def test_roc_hand_3x3(seed):
    rng = np.random.default_rng(seed)
    truth = np.array([[1, 0, 1], [0, 0, 1], [1, 0, 0]])
    scores = rng.integers(0, 4, size=(3, 3)) / 3.0
    got = {p[:2] for p in metrics.roc_curve(scores, truth)}
    assert got == exhaustive_roc(scores, truth)


def test_diagonal_flag():
    truth = np.array([[1, 1], [0, 0]])
    scores = np.array([[0.0, 0.9], [0.2, 0.5]])
    assert metrics.auc(metrics.roc_curve(scores, truth, include_diagonal=False)) == 1.0
    assert metrics.auc(metrics.roc_curve(scores, truth)) < 1.0


@pytest.mark.parametrize("seed", range(20))
def test_auc_mann_whitney(seed):
    rng = np.random.default_rng(seed)
    truth = rng.random((6, 6)) < 0.3
    truth[0, 0], truth[0, 1] = True, False
    scores = rng.random((6, 6)) if seed % 2 else rng.integers(0, 5, size=(6, 6)) / 4
    assert abs(metrics.auc(metrics.roc_curve(scores, truth)) - mann_whitney(scores.ravel(), truth.ravel())) < 1e-12


def _labelled(lo):
    # integer grid keeps scores distinct after the monotone transforms below
    scores = arrays(np.int64, 16, elements=st.integers(lo, 1000), unique=True).map(lambda a: a / 100.0)
    return st.tuples(scores, arrays(bool, 16)).filter(lambda p: 0 < p[1].sum() < 16)


labelled = _labelled(-1000)


@given(labelled)
def test_auc_monotone_invariant(pair):
    s, t = pair
    a = metrics.auc(metrics.roc_curve(s, t))
    b = metrics.auc(metrics.roc_curve(np.exp(s) * 3 + 1, t))
    assert abs(a - b) < 1e-12


@given(labelled)
def test_auc_complement(pair):
    s, t = pair
    assert abs(metrics.auc(metrics.roc_curve(s, t)) + metrics.auc(metrics.roc_curve(-s, t)) - 1) < 1e-9


@given(labelled)
def test_roc_monotone(pair):
    pts = metrics.roc_curve(*pair)
    f = [p[0] for p in pts]
    t = [p[1] for p in pts]
    assert f == sorted(f) and t == sorted(t)
    assert 0 <= metrics.auc(pts) <= 1


def test_f1_perfect_and_empty():
    truth = np.array([[1, 0], [1, 0]])
    assert metrics.f1_at_threshold(truth.astype(float), truth, 0.5) == 1.0
    assert metrics.f1_at_threshold(np.zeros((2, 2)), truth, 0.5) == 0.0


def test_f1_enumeration():
    rng = np.random.default_rng(3)
    scores, truth = rng.random((4, 4)), rng.random((4, 4)) < 0.4
    for thr in (0.2, 0.5, 0.8):
        tp = fp = fn = 0
        for a, b in itertools.product(range(4), range(4)):
            pred = scores[a, b] >= thr
            tp += pred and truth[a, b]
            fp += pred and not truth[a, b]
            fn += (not pred) and truth[a, b]
        expected = 0.0 if tp == 0 else 2 * tp / (2 * tp + fp + fn)
        assert metrics.f1_at_threshold(scores, truth, thr) == pytest.approx(expected, abs=1e-15)


@given(_labelled(0))
def test_f1_endpoints(pair):
    s, t = pair
    assert metrics.f1_at_threshold(s, t, s.max() + 1) == 0.0
    # theta = 0 on non-negative scores: everything predicted positive, recall 1
    assert metrics.f1_at_threshold(s, t, 0.0) == pytest.approx(2 * t.mean() / (1 + t.mean()))


def test_best_f1_not_below_fixed():
    rng = np.random.default_rng(0)
    scores, truth = rng.random((5, 5)), rng.random((5, 5)) < 0.3
    best, thr = metrics.best_f1(scores, truth)
    assert best >= metrics.f1_at_threshold(scores, truth, 0.5)
    assert metrics.f1_at_threshold(scores, truth, thr) == best


def _dm(a, f=0.5):
    return metrics.DatasetMetrics("d", a, f, f, 0.5, [(0, 0, 1), (1, 1, 0)])


def test_aggregate_means():
    assert metrics.aggregate("g", [_dm(0.6)]).mean_auc == 0.6
    assert metrics.aggregate("g", [_dm(0.6), _dm(0.8)]).mean_auc == pytest.approx(0.7, abs=1e-15)
    vals = np.random.default_rng(1).random(20)
    rep = metrics.aggregate("g", [_dm(v, 1 - v) for v in vals])
    assert abs(rep.mean_auc - sum(vals) / 20) < 1e-12
    assert abs(rep.mean_f1 - sum(1 - v for v in vals) / 20) < 1e-12
    assert len(rep.to_dict()["datasets"]) == 20
    with pytest.raises(ValueError):
        metrics.aggregate("g", [])


def test_roc_csv():
    text = metrics.roc_to_csv([(0.0, 0.0, float("inf")), (0.5, 1.0, 0.3)])
    assert text.splitlines() == ["fpr,tpr,threshold", "0.0,0.0,inf", "0.5,1.0,0.3"]
