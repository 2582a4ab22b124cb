"""
Dihedral test-time augmentation and tissue context
===================================================

"""
import numpy as np

from celldet.ensemble import D4, compose_ctm_input, leak_tissue_labels, tta_predict
from celldet.trainbench import make_scenes
from celldet.trainbench.synth import SceneParams
from celldet.trainbench.training import TrainConfig, new_cell_model, train

scene = make_scenes(1, 1, SceneParams(size=64, tissue_size=64, n_cells=5))[0]

# the eight flips/rotations undo exactly
x = scene.cell_img
print("all round trips exact:", all(np.array_equal(t.invert(t.apply(x)), x) for t in D4))

# the surrogate is built from rotation-invariant features, so TTA changes nothing
res = train(new_cell_model(), make_scenes(2, 3, SceneParams(size=64, tissue_size=64, n_cells=5)),
            "soft_is", TrainConfig(loss_kind="weighted_mse", epochs=3, k_folds=1))
print("TTA equals plain prediction:", np.array_equal(tta_predict(res.model, x), res.model(x)))

# tissue context: crop the cell field of view from the tissue map and upsample it
reg = scene.registration
print("cell patch sits at", reg.cell_offset_in_tissue, "size", reg.cell_extent_in_tissue,
      "in the tissue patch")
tissue_gt = scene.tissue_gt
onehot = np.stack([tissue_gt == 1, tissue_gt == 2]).astype(float)
blurry = 0.5 * onehot + 0.25
leaked = leak_tissue_labels(blurry, tissue_gt)
stacked = compose_ctm_input(x, leaked, reg)
print("network input channels:", stacked.shape[0], "(RGB + background/cancer)")
