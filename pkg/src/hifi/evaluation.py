"""Point-adjusted detection metrics and exhaustive best-F1 threshold search."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional

import numpy as np
import torch

from .dataio import RawSeries, make_windows
from .model import HifiModel, anomaly_score


@dataclass
class ScoreSeries:
    """Scores aligned with labels; ``timestamps[i]`` is the test index of window ``i``'s last step."""

    scores: np.ndarray
    labels: Optional[np.ndarray]
    timestamps: np.ndarray

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        self.timestamps = np.asarray(self.timestamps, dtype=np.int64)
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int8)
            if self.labels.shape != self.scores.shape:
                raise ValueError(f"{self.labels.shape[0]} labels for {self.scores.shape[0]} scores")
        if not np.all(np.isfinite(self.scores)):
            raise ValueError("scores must be finite")

    def write(self, path: str | Path) -> None:
        rows = ["timestamp score label"]
        labels = self.labels if self.labels is not None else np.full(self.scores.shape, -1)
        rows += [f"{t} {s!r} {int(l)}" for t, s, l in zip(self.timestamps, self.scores.tolist(), labels)]
        Path(path).write_text("\n".join(rows) + "\n")

    @classmethod
    def read(cls, path: str | Path) -> "ScoreSeries":
        data = np.loadtxt(path, skiprows=1, ndmin=2)
        labels = data[:, 2].astype(np.int8)
        return cls(data[:, 1], None if np.all(labels < 0) else labels, data[:, 0].astype(np.int64))


@dataclass
class DetectionResult:
    threshold: float
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    fn: int

    def report(self) -> str:
        return "\n".join(f"{k}={v}" for k, v in asdict(self).items())

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)


def _prf(tp, fp, fn):
    """Precision, recall, F1 with 0/0 := 0; works elementwise on arrays."""
    tp = np.asarray(tp, dtype=np.float64)
    fp = np.asarray(fp, dtype=np.float64)
    fn = np.asarray(fn, dtype=np.float64)
    with np.errstate(invalid="ignore", divide="ignore"):
        p = np.where(tp + fp > 0, tp / (tp + fp), 0.0)
        r = np.where(tp + fn > 0, tp / (tp + fn), 0.0)
        f1 = np.where(p + r > 0, 2 * p * r / (p + r), 0.0)
    return p, r, f1


def label_segments(labels: np.ndarray) -> list[tuple[int, int]]:
    """Maximal runs of 1s as half-open ``(start, stop)`` pairs."""
    lab = np.asarray(labels).astype(bool).astype(np.int8)
    edges = np.diff(np.concatenate([[0], lab, [0]]))
    starts = np.flatnonzero(edges == 1)
    stops = np.flatnonzero(edges == -1)
    return list(zip(starts.tolist(), stops.tolist()))


def point_adjust(pred: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Mark a whole labelled anomaly segment as detected when any point in it is."""
    pred = np.asarray(pred)
    labels = np.asarray(labels)
    if pred.shape != labels.shape:
        raise ValueError(f"pred has length {pred.shape[0]}, labels {labels.shape[0]}")
    out = pred.astype(bool).copy()
    for start, stop in label_segments(labels):
        if out[start:stop].any():
            out[start:stop] = True
    return out.astype(np.int8)


def metrics_at_threshold(s: ScoreSeries, thr: float) -> DetectionResult:
    pred = point_adjust((s.scores >= thr).astype(np.int8), s.labels).astype(bool)
    lab = s.labels.astype(bool)
    tp = int(np.sum(pred & lab))
    fp = int(np.sum(pred & ~lab))
    fn = int(np.sum(~pred & lab))
    p, r, f1 = _prf(tp, fp, fn)
    return DetectionResult(float(thr), float(p), float(r), float(f1), tp, fp, fn)


def candidate_thresholds(scores: np.ndarray) -> np.ndarray:
    """Distinct scores, ascending, plus one value just above the maximum."""
    distinct = np.unique(scores)
    return np.append(distinct, np.nextafter(distinct[-1], np.inf))


def best_f1_sweep(s: ScoreSeries) -> DetectionResult:
    """Exhaustive threshold search for the point-adjusted best F1.

    For every candidate threshold ``thr`` (prediction rule ``score >= thr``),
    a labelled segment counts as fully detected iff its maximum score reaches
    ``thr``, and false positives are the normal points at or above ``thr``;
    both are counted for all candidates at once with sorted lookups.

    Ties in F1 go to higher precision, then to the lower threshold. When no
    threshold reaches a positive F1 the result above the maximum score (no
    detections) is returned.
    """
    if s.scores.size == 0:
        raise ValueError("empty score series")
    if s.labels is None:
        raise ValueError("score series has no labels")
    cands = candidate_thresholds(s.scores)
    lab = s.labels.astype(bool)

    normal = np.sort(s.scores[~lab])
    fp = normal.size - np.searchsorted(normal, cands, side="left")

    segs = label_segments(s.labels)
    n_anom = int(lab.sum())
    if segs:
        seg_max = np.array([s.scores[a:b].max() for a, b in segs])
        seg_len = np.array([b - a for a, b in segs], dtype=np.int64)
        order = np.argsort(seg_max, kind="stable")
        seg_max, seg_len = seg_max[order], seg_len[order]
        # suffix sums: anomaly points in segments whose max is >= thr
        suffix = np.concatenate([np.cumsum(seg_len[::-1])[::-1], [0]])
        tp = suffix[np.searchsorted(seg_max, cands, side="left")]
    else:
        tp = np.zeros(cands.shape, dtype=np.int64)
    fn = n_anom - tp
    p, r, f1 = _prf(tp, fp, fn)

    if f1.max() <= 0.0:
        i = cands.size - 1
    else:
        # lexsort: last key is primary; lower threshold wins remaining ties
        i = np.lexsort((cands, -p, -f1))[0]
    return DetectionResult(float(cands[i]), float(p[i]), float(r[i]), float(f1[i]),
                           int(tp[i]), int(fp[i]), int(fn[i]))


def score_windows(model: HifiModel, series: RawSeries | np.ndarray, deterministic: bool = False,
                  eps_seed: int = 0, samples: int = 1, batch_size: int = 256) -> tuple[np.ndarray, np.ndarray]:
    """Anomaly score of every stride-1 window; returns ``(scores, end_indices)``.

    With ``samples > 1`` the score is averaged over independent latent draws.
    """
    w = model.config.w
    batch = make_windows(series, w, 1)
    batch.dtype = np.dtype(torch.empty((), dtype=model.hidden.weight.dtype).numpy().dtype)
    gen = torch.Generator().manual_seed(int(eps_seed))
    model.eval()
    out = np.empty(len(batch), dtype=np.float64)
    n_draws = 1 if deterministic or not model.config.uses_ve else max(1, int(samples))
    with torch.no_grad():
        for start in range(0, len(batch), batch_size):
            rows = np.arange(start, min(start + batch_size, len(batch)))
            X = torch.from_numpy(batch.take(rows))
            acc = torch.zeros(len(rows), dtype=torch.float64)
            for _ in range(n_draws):
                trace = model(X, generator=gen, deterministic=deterministic)
                acc += anomaly_score(trace).double()
            out[rows] = (acc / n_draws).numpy()
    return out, batch.end_indices.copy()


def score_dataset(model: HifiModel, test: RawSeries, labels: Optional[np.ndarray] = None,
                  deterministic: bool = False, eps_seed: int = 0, samples: int = 1,
                  batch_size: int = 256) -> ScoreSeries:
    """Score a normalized test series; labels are aligned from index ``w - 1`` on.

    The first ``w - 1`` timestamps have no complete window and are dropped.
    """
    values = test.values if isinstance(test, RawSeries) else np.asarray(test)
    if labels is not None and len(labels) != values.shape[0]:
        raise ValueError(f"{len(labels)} labels for a test series of length {values.shape[0]}")
    scores, ends = score_windows(model, test, deterministic, eps_seed, samples, batch_size)
    aligned = None if labels is None else np.asarray(labels)[ends]
    return ScoreSeries(scores, aligned, ends)


def micro_average(results: list[DetectionResult]) -> DetectionResult:
    """Pool per-entity confusion counts (each at its own best threshold)."""
    tp = sum(r.tp for r in results)
    fp = sum(r.fp for r in results)
    fn = sum(r.fn for r in results)
    p, r, f1 = _prf(tp, fp, fn)
    return DetectionResult(float("nan"), float(p), float(r), float(f1), tp, fp, fn)
