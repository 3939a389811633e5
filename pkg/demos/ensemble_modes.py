"""
Comparing cost ensembles
========================

Each re-ID feature yields its own cost matrix.  The ensemble mode decides how
they are merged before assignment.  Here the crowded preset (four tools, one
instrument exchange, false positives and misses) is tracked under every mode.
"""

from tooltrack import AssociationConfig, EvalInput, FeatureSelection, evaluate, generate, preset, run
from tooltrack.config import ENSEMBLE_MODES

sim = generate(preset("crowded_four_tools"))
features = FeatureSelection.of("IOU", "BYTE", "MC", "DF", "AF")

print(f"{'mode':6s} {'HOTA':>6s} {'IDF1':>6s} {'IDSW':>5s}")
for mode in ENSEMBLE_MODES:
    cfg = AssociationConfig(features=features, ensemble_mode=mode)
    tables = run(sim.observations, cfg).tables
    rep = evaluate(EvalInput.from_ground_truth(sim.gt, tables["intraoperative"]))
    print(f"{mode:6s} {rep.HOTA:6.3f} {rep.IDF1:6.3f} {rep.IDSW:5d}")

###############################################################################
# The elementwise modes work directly on costs.  The vote modes solve each
# feature separately and keep the pairs a weighted majority agrees on, then
# fill the rest from an averaged matrix.
