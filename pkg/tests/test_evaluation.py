import numpy as np
import pytest
import torch
from hypothesis import given, settings, strategies as st

from hifi.dataio import RawSeries, make_windows
from hifi.evaluation import (DetectionResult, ScoreSeries, best_f1_sweep, candidate_thresholds, label_segments,
                             metrics_at_threshold, micro_average, point_adjust, score_dataset)
from hifi.model import HifiConfig, HifiModel, anomaly_score

SMALL = dict(d=2, w=5, d1=8, d2=8, d3=16, d_k=4, num_heads=2, l=1, K=2, k_topk=3)


def scan_adjust(pred, labels):
    """Walk each label run explicitly."""
    out = list(pred)
    i = 0
    while i < len(labels):
        if labels[i] == 1:
            j = i
            while j < len(labels) and labels[j] == 1:
                j += 1
            if any(pred[i:j]):
                for t in range(i, j):
                    out[t] = 1
            i = j
        else:
            i += 1
    return out


def brute_metrics(scores, labels, thr):
    pred = scan_adjust([1 if s >= thr else 0 for s in scores], labels)
    tp = sum(1 for p, l in zip(pred, labels) if p and l)
    fp = sum(1 for p, l in zip(pred, labels) if p and not l)
    fn = sum(1 for p, l in zip(pred, labels) if not p and l)
    prec = tp / (tp + fp) if tp + fp else 0.0
    rec = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * prec * rec / (prec + rec) if prec + rec else 0.0
    return f1, prec, thr


def brute_sweep(scores, labels):
    cands = sorted(set(scores)) + [float(np.nextafter(max(scores), np.inf))]
    results = [brute_metrics(scores, labels, c) for c in cands]
    if max(r[0] for r in results) == 0:
        return results[-1]
    return min(results, key=lambda r: (-r[0], -r[1], r[2]))


def test_point_adjust_examples():
    assert point_adjust(np.array([0, 0, 1, 0, 0]), np.array([0, 1, 1, 1, 0])).tolist() == [0, 1, 1, 1, 0]
    assert point_adjust(np.zeros(5, int), np.array([0, 1, 1, 1, 0])).tolist() == [0] * 5
    assert point_adjust(np.array([1, 0, 0, 0, 1]), np.array([0, 1, 1, 1, 0])).tolist() == [1, 0, 0, 0, 1]


def test_point_adjust_length_mismatch():
    with pytest.raises(ValueError):
        point_adjust(np.zeros(3), np.zeros(4))


def test_point_adjust_random_200():
    rng = np.random.default_rng(1)
    for _ in range(50):
        labels = (rng.random(200) < 0.2).astype(int)
        pred = (rng.random(200) < 0.1).astype(int)
        assert point_adjust(pred, labels).tolist() == scan_adjust(pred.tolist(), labels.tolist())


def test_label_segments():
    assert label_segments(np.array([1, 1, 0, 1, 0, 0, 1])) == [(0, 2), (3, 4), (6, 7)]
    assert label_segments(np.zeros(4)) == []


binary = st.lists(st.integers(0, 1), min_size=1, max_size=60)


@given(binary, st.data())
def test_point_adjust_properties(labels, data):
    n = len(labels)
    pred = np.array(data.draw(st.lists(st.integers(0, 1), min_size=n, max_size=n)))
    extra = np.array(data.draw(st.lists(st.integers(0, 1), min_size=n, max_size=n)))
    lab = np.array(labels)
    once = point_adjust(pred, lab)
    assert np.array_equal(point_adjust(once, lab), once)
    more = point_adjust(pred | extra, lab)
    assert np.all(more >= once)
    assert np.all(once[lab == 0] == pred[lab == 0])
    if lab.sum():
        assert (once & lab).sum() >= (pred & lab).sum()


def test_metrics_at_threshold_examples():
    s = ScoreSeries([0.1, 0.9, 0.2], [0, 1, 0], [0, 1, 2])
    r = metrics_at_threshold(s, 0.5)
    assert (r.precision, r.recall, r.f1) == (1.0, 1.0, 1.0)
    assert metrics_at_threshold(s, -np.inf).recall == 1.0
    r = metrics_at_threshold(s, 1.0)
    assert (r.tp, r.precision, r.recall, r.f1) == (0, 0.0, 0.0, 0.0)


def test_metrics_counts_consistent():
    rng = np.random.default_rng(2)
    s = ScoreSeries(rng.random(100), (rng.random(100) < 0.3).astype(int), np.arange(100))
    r = metrics_at_threshold(s, 0.6)
    assert r.tp + r.fn == int(s.labels.sum())
    assert r.precision == pytest.approx(r.tp / (r.tp + r.fp))
    assert r.f1 == pytest.approx(2 * r.precision * r.recall / (r.precision + r.recall))


def test_sweep_all_normal_returns_sentinel():
    s = ScoreSeries([0.3, 0.1, 0.7], [0, 0, 0], [0, 1, 2])
    r = best_f1_sweep(s)
    assert r.f1 == 0.0 and r.threshold > 0.7 and r.tp == r.fp == 0
    assert r.threshold == candidate_thresholds(s.scores)[-1]


def test_sweep_three_point_example():
    r = best_f1_sweep(ScoreSeries([0.1, 0.9, 0.2], [0, 1, 0], [0, 1, 2]))
    assert (r.f1, r.threshold) == (1.0, 0.9)


def test_sweep_tie_break_prefers_precision_then_lower_threshold():
    # thr 0.5 → tp over the segment, no fp; thr 0.2 adds a false positive
    s = ScoreSeries([0.2, 0.5, 0.1, 0.5], [0, 1, 0, 1], np.arange(4))
    r = best_f1_sweep(s)
    assert r.threshold == 0.5 and r.precision == 1.0


def test_sweep_errors():
    with pytest.raises(ValueError):
        best_f1_sweep(ScoreSeries(np.array([]), np.array([]), np.array([])))
    with pytest.raises(ValueError):
        best_f1_sweep(ScoreSeries([0.1], None, [0]))


def test_sweep_matches_brute_force_500():
    rng = np.random.default_rng(3)
    for trial in range(3):
        n = 500
        labels = np.zeros(n, int)
        for _ in range(6):
            a = int(rng.integers(0, n - 20))
            labels[a:a + int(rng.integers(1, 20))] = 1
        scores = np.round(rng.random(n) + labels * rng.random(n) * 0.5, 3)
        r = best_f1_sweep(ScoreSeries(scores, labels, np.arange(n)))
        f1, _, thr = brute_sweep(scores.tolist(), labels.tolist())
        assert (r.f1, r.threshold) == (f1, thr)


@settings(max_examples=60)
@given(st.lists(st.tuples(st.integers(0, 8), st.integers(0, 1)), min_size=1, max_size=25))
def test_sweep_dominates_every_candidate(pairs):
    scores = np.array([p[0] / 8 for p in pairs])
    labels = np.array([p[1] for p in pairs])
    s = ScoreSeries(scores, labels, np.arange(len(pairs)))
    best = best_f1_sweep(s)
    for c in candidate_thresholds(scores):
        assert best.f1 >= metrics_at_threshold(s, c).f1
    assert best.f1 == metrics_at_threshold(s, best.threshold).f1


def test_micro_average_pools_counts():
    a = DetectionResult(0.5, 1.0, 0.5, 2 / 3, 2, 0, 2)
    b = DetectionResult(0.1, 0.5, 1.0, 2 / 3, 2, 2, 0)
    m = micro_average([a, b])
    assert (m.tp, m.fp, m.fn) == (4, 2, 2)
    assert m.f1 == pytest.approx(2 / 3)


def test_score_series_round_trip(tmp_path):
    s = ScoreSeries([0.125, 1 / 3, 2.5], [0, 1, 0], [4, 5, 6])
    s.write(tmp_path / "s.txt")
    assert (tmp_path / "s.txt").read_text().splitlines()[0] == "timestamp score label"
    back = ScoreSeries.read(tmp_path / "s.txt")
    assert np.array_equal(back.scores, s.scores) and np.array_equal(back.labels, s.labels)
    assert np.array_equal(back.timestamps, s.timestamps)
    unlabeled = ScoreSeries([1.0, 2.0], None, [0, 1])
    unlabeled.write(tmp_path / "u.txt")
    assert ScoreSeries.read(tmp_path / "u.txt").labels is None


def test_score_series_rejects_mismatch():
    with pytest.raises(ValueError):
        ScoreSeries([0.1, 0.2], [0], [0, 1])
    with pytest.raises(ValueError):
        ScoreSeries([np.nan], [0], [0])


def _model():
    return HifiModel(HifiConfig(**SMALL), seed=0).double().eval()


def test_score_dataset_single_window_oracle():
    model = _model()
    x = np.random.default_rng(4).random((5, 2))
    s = score_dataset(model, RawSeries(x), np.array([0, 0, 0, 0, 1]), deterministic=True)
    with torch.no_grad():
        direct = anomaly_score(model(torch.from_numpy(x[None]), deterministic=True)).item()
    assert s.scores.tolist() == [pytest.approx(direct, abs=1e-12)]
    assert s.labels.tolist() == [1] and s.timestamps.tolist() == [4]


def test_score_dataset_alignment_and_reproducibility():
    model = _model()
    x = np.random.default_rng(5).random((30, 2))
    labels = np.zeros(30, int)
    labels[10:13] = 1
    a = score_dataset(model, RawSeries(x), labels, deterministic=True)
    b = score_dataset(model, RawSeries(x), labels, deterministic=True)
    assert np.array_equal(a.scores, b.scores)
    assert a.timestamps.tolist() == list(range(4, 30))
    assert np.array_equal(a.labels, labels[4:])
    c = score_dataset(model, RawSeries(x), labels, eps_seed=3)
    d = score_dataset(model, RawSeries(x), labels, eps_seed=3)
    assert np.array_equal(c.scores, d.scores)


def test_score_dataset_locality():
    model = _model()
    x = np.random.default_rng(6).random((30, 2))
    base = score_dataset(model, RawSeries(x), deterministic=True).scores
    t = 12
    y = x.copy()
    y[t] += 0.5
    pert = score_dataset(model, RawSeries(y), deterministic=True).scores
    ends = np.arange(4, 30)
    contains = (ends >= t) & (ends - 4 <= t)
    assert np.array_equal(base[~contains], pert[~contains])
    assert np.all(base[contains] != pert[contains])


def test_score_dataset_errors():
    with pytest.raises(ValueError):
        score_dataset(_model(), RawSeries(np.zeros((10, 2))), np.zeros(9))
    with pytest.raises(Exception):
        score_dataset(_model(), RawSeries(np.zeros((3, 2))))


def test_scoring_batch_size_independent():
    model = _model()
    x = np.random.default_rng(7).random((40, 2))
    a = score_dataset(model, RawSeries(x), deterministic=True, batch_size=3).scores
    b = score_dataset(model, RawSeries(x), deterministic=True, batch_size=100).scores
    np.testing.assert_allclose(a, b, rtol=0, atol=1e-12)
