"""Identity metrics (IDF1, IDR, IDP) and counting metrics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from ..tables import TrackTable
from ._frames import EPS, dense_ids, frame_blocks


@dataclass(frozen=True)
class IdentityResult:
    IDF1: float
    IDR: float
    IDP: float
    IDTP: int
    IDFN: int
    IDFP: int


def eval_idf1(gt: TrackTable, pred: TrackTable, threshold: float = 0.5) -> IdentityResult:
    """Best global one-to-one GT-ID to predicted-ID correspondence, scored as F1."""
    if len(gt) == 0:
        raise ValueError("no ground truth")
    g_dense, n_g = dense_ids(gt.id)
    p_dense, n_p = dense_ids(pred.id)
    co = np.zeros((n_g, n_p))
    for _, g, p, sim in frame_blocks(gt, pred):
        if sim.size:
            r, c = np.nonzero(sim >= threshold - EPS)
            np.add.at(co, (g_dense[g][r], p_dense[p][c]), 1)
    idtp = 0
    if n_p:
        r, c = linear_sum_assignment(-co)
        idtp = int(co[r, c].sum())
    idfn = len(gt) - idtp
    idfp = len(pred) - idtp
    return IdentityResult(
        IDF1=2 * idtp / (2 * idtp + idfp + idfn),
        IDR=idtp / len(gt),
        IDP=idtp / len(pred) if len(pred) else 0.0,
        IDTP=idtp,
        IDFN=idfn,
        IDFP=idfp,
    )


def eval_counts(pred: TrackTable) -> tuple:
    """``(#Dets, #IDs)`` of a prediction table."""
    return len(pred), int(len(np.unique(pred.id)))
