"""
Tracking at lower frame rates
=============================

Annotated surgical video is often sampled at 1 fps.  Subsampling keeps every
n-th frame, so tools jump further between frames and box overlap stops being
a useful cue.  Direction embeddings do not depend on motion.
"""

from tooltrack import AssociationConfig, FeatureSelection, generate, preset
from tooltrack.metrics import fps_harness

sim = generate(preset("crossing_graspers"))
rates = (1, 5, 25)

configs = {
    "IOU": AssociationConfig(features=FeatureSelection.of("IOU")),
    "IOU+KF": AssociationConfig(features=FeatureSelection.of("IOU", "KF")),
    "default": AssociationConfig(),
}

print("features  " + "  ".join(f"{r:>2d} fps" for r in rates))
for name, cfg in configs.items():
    reports = fps_harness(sim.observations, sim.gt, cfg, rates)
    print(f"{name:9s} " + "  ".join(f"{reports[r].HOTA:6.3f}" for r in rates))
