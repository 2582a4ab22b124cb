"""
Greedy matching and F1
=======================

"""
import numpy as np

from celldet.data import BACKGROUND_CELL, TUMOR_CELL, Detection, PointAnnotations
from celldet.evaluation import ClassCounts, f1_scores, greedy_match, group_report, match_detections

# nearest pairs first, each point used once, 15 px radius (3 um at 0.2 mpp)
print(greedy_match([(0, 0), (10, 0)], [(9, 0), (30, 0)], 15.0))

gt = PointAnnotations([(10, 10), (50, 50), (90, 10)], [TUMOR_CELL, TUMOR_CELL, BACKGROUND_CELL])
dets = [Detection(12, 11, TUMOR_CELL, 0.9), Detection(52, 47, BACKGROUND_CELL, 0.7),
        Detection(88, 12, BACKGROUND_CELL, 0.8)]
m = match_detections(dets, gt)
for c, k in m.counts.items():
    print("class", c, k)
print("mean F1:", round(f1_scores(m).mean_f1, 4))

# F1 = 2TP / (2TP + FP + FN)
print("F1(TP=8, FP=2, FN=4) =", round(ClassCounts(8, 2, 4).f1, 4))

# per-organ summary with pooled counts
print(group_report([0.5, 1.0, 0.0], ["kidney", "bladder", "kidney"], [m, m, m]))
