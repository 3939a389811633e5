import numpy as np

from ..tables import TrackTable
from ..track_model import iou_matrix

# tolerance for "IoU >= threshold" comparisons
EPS = np.finfo(float).eps


def frame_blocks(gt: TrackTable, pred: TrackTable):
    """Yield ``(frame, gt_rows, pred_rows, iou)`` for every frame present in either table.

    Row arrays index into the tables; ``iou`` is ``len(gt_rows) x len(pred_rows)``.
    """
    frames = np.union1d(gt.frame, pred.frame)
    g_order = np.argsort(gt.frame, kind="stable")
    p_order = np.argsort(pred.frame, kind="stable")
    g_frames = gt.frame[g_order]
    p_frames = pred.frame[p_order]
    for f in frames.tolist():
        g = g_order[np.searchsorted(g_frames, f, "left"):np.searchsorted(g_frames, f, "right")]
        p = p_order[np.searchsorted(p_frames, f, "left"):np.searchsorted(p_frames, f, "right")]
        yield f, g, p, iou_matrix(gt.boxes[g], pred.boxes[p])


def dense_ids(ids: np.ndarray):
    """Map arbitrary positive IDs to ``0..n-1``; returns ``(dense, n)``."""
    uniq, inverse = np.unique(ids, return_inverse=True)
    return inverse.reshape(-1), len(uniq)
