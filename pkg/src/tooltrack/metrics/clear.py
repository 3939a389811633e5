"""CLEAR MOT metrics: MOTA, MOTP, mostly tracked/lost, ID switches, fragmentation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from ..tables import TrackTable
from ._frames import EPS, dense_ids, frame_blocks

IOU_THRESHOLD = 0.5
CONTINUITY_BONUS = 1000.0


@dataclass(frozen=True)
class ClearResult:
    MOTA: float
    MOTP: float
    MT: int
    PT: int
    ML: int
    IDSW: int
    Frag: int
    TP: int
    FN: int
    FP: int


def eval_clear(gt: TrackTable, pred: TrackTable, threshold: float = IOU_THRESHOLD) -> ClearResult:
    """Frame-by-frame CLEAR matching.

    Pairs below ``threshold`` IoU are ineligible.  A pair that was matched in
    the previous frame gets a large bonus so that it is kept while it stays
    eligible; the rest is a maximum-IoU assignment.  A switch is a GT track
    matched to a different prediction than the last one it was matched to.
    Frag counts how often a GT track's coverage resumes after an interruption.
    """
    if len(gt) == 0:
        raise ValueError("no ground truth")
    g_dense, n_g = dense_ids(gt.id)
    p_dense, n_p = dense_ids(pred.id)
    last_pred = np.full(n_g, -1)
    prev_step = np.full(n_g, -1)
    g_count = np.zeros(n_g, dtype=int)
    matched_count = np.zeros(n_g, dtype=int)
    frag_starts = np.zeros(n_g, dtype=int)
    tp = fn = fp = idsw = 0
    iou_sum = 0.0
    for _, g, p, sim in frame_blocks(gt, pred):
        gi, pi = g_dense[g], p_dense[p]
        g_count[gi] += 1
        rows = cols = np.zeros(0, dtype=int)
        if sim.size:
            score = CONTINUITY_BONUS * (prev_step[gi][:, None] == pi[None, :]) + sim
            score[sim < threshold - EPS] = 0.0
            r, c = linear_sum_assignment(-score)
            keep = score[r, c] > 0
            rows, cols = r[keep], c[keep]
        mg, mp = gi[rows], pi[cols]
        n = len(rows)
        tp += n
        fn += len(g) - n
        fp += len(p) - n
        iou_sum += float(sim[rows, cols].sum()) if n else 0.0
        idsw += int(np.sum((last_pred[mg] >= 0) & (last_pred[mg] != mp)))
        last_pred[mg] = mp
        was_tracked = prev_step >= 0
        prev_step[:] = -1
        prev_step[mg] = mp
        frag_starts += (~was_tracked) & (prev_step >= 0)
        matched_count[mg] += 1

    n_gt = tp + fn
    ratio = matched_count[g_count > 0] / g_count[g_count > 0]
    mt = int(np.sum(ratio >= 0.8))
    ml = int(np.sum(ratio < 0.2))
    return ClearResult(
        MOTA=1.0 - (fn + fp + idsw) / n_gt,
        MOTP=iou_sum / tp if tp else 0.0,
        MT=mt,
        PT=int(len(ratio) - mt - ml),
        ML=ml,
        IDSW=int(idsw),
        Frag=int(np.sum(np.maximum(frag_starts - 1, 0))),
        TP=int(tp),
        FN=int(fn),
        FP=int(fp),
    )
