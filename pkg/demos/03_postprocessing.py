"""
From probability maps to detections
====================================

"""
import numpy as np

from celldet.data import BACKGROUND_CELL, TUMOR_CELL, PointAnnotations
from celldet.groundtruth import soft_is_gt
from celldet.postprocess import detect_cells_hard, detect_cells_soft

# soft maps: blur the foreground, keep separated peaks
pts = PointAnnotations([(20.4, 18.7), (60, 25), (40, 70)], [TUMOR_CELL, BACKGROUND_CELL, TUMOR_CELL])
pred = soft_is_gt(pts, None, 96, 96, sigma_px=3.0).maps
for d in detect_cells_soft(pred):
    print("soft:", d)

# hard maps: Otsu, cleanup, distance transform, marker watershed
yy, xx = np.mgrid[0:64, 0:64]
a = np.hypot(xx - 24, yy - 32) <= 10
b = np.hypot(xx - 39, yy - 32) <= 10
blob = np.stack([~(a | b), np.zeros_like(a), a | b]).astype(float)
print("touching discs, centres 15 px apart, r = 10:")
for d in detect_cells_hard(blob):
    print("hard:", d)
