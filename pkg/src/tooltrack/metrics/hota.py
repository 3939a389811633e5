"""Higher-order tracking accuracy and its detection/association/localization parts."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..assignment import GATE, solve
from ..tables import TrackTable
from ._frames import EPS, dense_ids, frame_blocks

ALPHAS = np.linspace(0.05, 0.95, 19)
# weight of localization inside the matching score; only breaks ties in alignment
LOC_TIEBREAK = 1e-6


@dataclass(frozen=True, eq=False)
class HotaResult:
    HOTA: float
    DetA: float
    AssA: float
    LocA: float
    DetRe: float
    DetPr: float
    AssRe: float
    AssPr: float
    per_alpha: dict


def _match(cost: np.ndarray, eligible: np.ndarray):
    # common case: no box competes for two partners
    if eligible.sum(axis=0).max(initial=0) <= 1 and eligible.sum(axis=1).max(initial=0) <= 1:
        return [tuple(p) for p in np.argwhere(eligible).tolist()]
    return list(solve(np.where(eligible, cost, GATE)).pairs)


def global_alignment(gt: TrackTable, pred: TrackTable, g_dense, p_dense, n_g, n_p):
    """Soft alignment score between every GT and predicted ID, plus per-ID box counts."""
    potential = np.zeros((n_g, n_p))
    g_count = np.zeros(n_g)
    p_count = np.zeros(n_p)
    for _, g, p, sim in frame_blocks(gt, pred):
        gi, pi = g_dense[g], p_dense[p]
        g_count[gi] += 1
        p_count[pi] += 1
        if sim.size:
            denom = sim.sum(0)[None, :] + sim.sum(1)[:, None] - sim
            sim_iou = np.zeros_like(sim)
            mask = denom > EPS
            sim_iou[mask] = sim[mask] / denom[mask]
            potential[gi[:, None], pi[None, :]] += sim_iou
    score = potential / np.maximum(EPS, g_count[:, None] + p_count[None, :] - potential)
    return score, g_count, p_count


def eval_hota(gt: TrackTable, pred: TrackTable, alphas=ALPHAS) -> HotaResult:
    """HOTA averaged over the localization thresholds ``alphas``.

    At each threshold, boxes are matched one-to-one per frame among pairs
    with IoU >= alpha, maximising the number of matches, then the summed
    global ID alignment of the matched pairs, then their summed IoU.
    """
    if len(gt) == 0:
        raise ValueError("no ground truth")
    g_dense, n_g = dense_ids(gt.id)
    p_dense, n_p = dense_ids(pred.id)
    align, g_count, p_count = global_alignment(gt, pred, g_dense, p_dense, n_g, n_p)

    k = len(alphas)
    tp = np.zeros(k)
    fn = np.zeros(k)
    fp = np.zeros(k)
    loc = np.zeros(k)
    matches = np.zeros((k, n_g, n_p))
    for _, g, p, sim in frame_blocks(gt, pred):
        gi, pi = g_dense[g], p_dense[p]
        cost = -(align[gi[:, None], pi[None, :]] + LOC_TIEBREAK * sim)
        for a, alpha in enumerate(alphas):
            pairs = _match(cost, sim >= alpha - EPS) if sim.size else []
            n = len(pairs)
            tp[a] += n
            fn[a] += len(g) - n
            fp[a] += len(p) - n
            for r, c in pairs:
                loc[a] += sim[r, c]
                matches[a, gi[r], pi[c]] += 1

    det_re = tp / np.maximum(1, tp + fn)
    det_pr = tp / np.maximum(1, tp + fp)
    det_a = tp / np.maximum(1, tp + fn + fp)
    union = g_count[None, :, None] + p_count[None, None, :] - matches
    ass_a = (matches * matches / np.maximum(1, union)).sum(axis=(1, 2)) / np.maximum(1, tp)
    ass_re = (matches * matches / np.maximum(1, g_count[None, :, None])).sum(axis=(1, 2)) / np.maximum(1, tp)
    ass_pr = (matches * matches / np.maximum(1, p_count[None, None, :])).sum(axis=(1, 2)) / np.maximum(1, tp)
    loc_a = np.where(tp > 0, loc / np.maximum(1, tp), 0.0)
    hota = np.sqrt(det_a * ass_a)
    per_alpha = {
        "alpha": alphas.tolist(), "HOTA": hota.tolist(), "DetA": det_a.tolist(), "AssA": ass_a.tolist(),
        "LocA": loc_a.tolist(),
    }
    return HotaResult(
        HOTA=float(hota.mean()), DetA=float(det_a.mean()), AssA=float(ass_a.mean()), LocA=float(loc_a.mean()),
        DetRe=float(det_re.mean()), DetPr=float(det_pr.mean()), AssRe=float(ass_re.mean()),
        AssPr=float(ass_pr.mean()), per_alpha=per_alpha,
    )
