"""Cell detection toolkit: ground-truth synthesis, losses, postprocessing,
cell-tissue composition, test-time augmentation and detection scoring."""

from .data import (BACKGROUND_CELL, TUMOR_CELL, Detection, GroundTruthMaps,
                   InstanceGroundTruth, PatchRegistration, PointAnnotations)

__version__ = "0.1.0"
