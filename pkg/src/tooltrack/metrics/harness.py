"""Re-run the tracker at reduced frame rates and score each run."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from ..config import AssociationConfig
from ..hbgm import run
from ..tables import GroundTruth
from ..track_model import FrameObservations
from .report import EvalInput, evaluate

BASE_RATE = 25


def subsample(observations: Sequence[FrameObservations], gt: GroundTruth, stride: int, origin: int | None = None):
    """Keep every ``stride``-th frame counted from ``origin`` (default: first observed frame)."""
    if stride < 1:
        raise ValueError("stride must be >= 1")
    if origin is None:
        origin = observations[0].frame if observations else 0
    obs = [o for o in observations if (o.frame - origin) % stride == 0]
    sub_gt = gt.select((gt.frame - origin) % stride == 0)
    sub_gt.condition_flags = {f: v for f, v in gt.condition_flags.items() if (f - origin) % stride == 0}
    return obs, sub_gt


def fps_harness(
    observations: Sequence[FrameObservations],
    gt: GroundTruth,
    cfg: AssociationConfig | None = None,
    rates=(1, 5, 25),
    perspective: str = "intraoperative",
    base_rate: int = BASE_RATE,
) -> dict:
    """``{rate: MetricsReport}`` for the tracker re-run on frames subsampled to each rate."""
    cfg = cfg or AssociationConfig()
    reports: dict = {}
    for rate in rates:
        if rate < 1 or base_rate % rate:
            raise ValueError(f"rate {rate} does not divide the base rate {base_rate}")
        obs, sub_gt = subsample(observations, gt, base_rate // rate)
        result = run(obs, cfg)
        pred = result.tables[_table_key(perspective)]
        reports[rate] = evaluate(EvalInput.from_ground_truth(sub_gt, pred, perspective), fps=result.fps)
    return reports


def _table_key(perspective: str) -> str:
    from ..tables import perspective_name

    return perspective_name(perspective)


def hota_table(reports: dict) -> dict:
    return {int(rate): float(np.round(r.HOTA, 12)) for rate, r in sorted(reports.items())}
