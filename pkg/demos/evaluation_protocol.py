"""
Point-adjust and the best-F1 sweep
==================================

A hand-sized score series shows why point-adjust lifts recall and how the
sweep picks a threshold.
"""
import numpy as np

from hifi import ScoreSeries, best_f1_sweep, metrics_at_threshold, point_adjust

labels = np.array([0, 0, 1, 1, 1, 1, 0, 0, 1, 1, 0, 0])
scores = np.array([.1, .2, .3, .9, .2, .1, .4, .1, .2, .5, .1, .3])

#
# At threshold 0.5 only two points fire, one inside each anomaly segment.
# Point-adjust credits the full segments.
#
raw = (scores >= 0.5).astype(int)
print("labels      ", labels)
print("raw pred    ", raw)
print("adjusted    ", point_adjust(raw, labels))

s = ScoreSeries(scores, labels, np.arange(len(scores)))
print("\nat 0.5:", metrics_at_threshold(s, 0.5))

#
# The sweep tries every distinct score plus one value above the maximum.
#
for thr in np.unique(scores):
    r = metrics_at_threshold(s, thr)
    print(f"thr {thr:.2f}  P {r.precision:.3f}  R {r.recall:.3f}  F1 {r.f1:.3f}")
print("\nbest:", best_f1_sweep(s))
