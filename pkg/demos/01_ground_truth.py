"""
Three ground-truth formats from the same point annotations
===========================================================

"""
import numpy as np

from celldet.groundtruth import circle_gt, hard_is_gt, soft_is_gt
from celldet.trainbench import make_scenes
from celldet.trainbench.synth import SceneParams

scene = make_scenes(0, 1, SceneParams(size=96, tissue_size=96, n_cells=6))[0]
pts, inst = scene.annotations, scene.instances
h, w = scene.shape
print("cells:", len(pts), "classes:", np.bincount(pts.class_id, minlength=3)[1:])
print("cells without an instance:", int(inst.unmatched.sum()))

# circles: a fixed disc per centroid, overlaps go to the nearer centroid
circ = circle_gt(pts, h, w, radius_px=7).maps
# hard instances: painted nucleus masks, discs where the segmenter missed
hard = hard_is_gt(inst, pts, h, w, radius_px=7).maps
# soft instances: unit-peak Gaussians (3 um = 15 px at 0.2 mpp) clipped to the masks
soft = soft_is_gt(pts, inst, sigma_px=15.0).maps

for name, m in (("circle", circ), ("hard_is", hard), ("soft_is", soft)):
    print(f"{name:8s} foreground px {float((1 - m[0]).sum()):8.1f}  "
          f"channel sum range [{m.sum(0).min():.3f}, {m.sum(0).max():.3f}]")

# peaks reach 1 only for isolated cells; wide Gaussians of nearby other-class cells share the mass
x, y = pts.pixel_indices()[1][0], pts.pixel_indices()[0][0]
print("soft value at first centroid:", soft[pts.class_id[0], y, x])
