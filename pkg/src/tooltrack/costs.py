"""Tracks x detections cost matrices and their ensembles.

Every non-gated cost is on the same [0, 1] scale: ``1 - IoU`` for the box
features and embedding distances divided by the metric's range (2 for
Euclidean distance between unit vectors, 1 for cosine distance) for the
learned features.
"""

from __future__ import annotations

import dataclasses
import math
from typing import Callable, Sequence

import numpy as np

from .assignment import GATE, Assignment, solve
from .errors import ConfigError
from .kalman import (
    KalmanParams,
    kalman_affine,
    kalman_initiate,
    kalman_predict,
    kalman_update,
)
from .track_model import BBox, Detection, Track, detections_boxes, iou_matrix

__all__ = [
    "GATE",
    "KalmanParams",
    "apply_cmc",
    "byte_split",
    "class_gate",
    "ensemble",
    "feature_cost",
    "kalman_initiate",
    "kalman_predict",
    "kalman_update",
    "pairwise_distance",
]

_EMBEDDING_KIND = {"AF": "appearance", "SF": "similarity", "DF": "direction"}
_METRIC_RANGE = {"euclidean": 2.0, "cosine": 1.0}


def byte_split(dets: Sequence[Detection], high: float, low: float):
    """Partition detections into high-confidence, low-confidence and discarded."""
    if not 0 <= low < high <= 1:
        raise ConfigError(f"BYTE thresholds need 0 <= low < high <= 1, got low={low} high={high}")
    hi, lo, rest = [], [], []
    for d in dets:
        if d.score >= high:
            hi.append(d)
        elif d.score >= low:
            lo.append(d)
        else:
            rest.append(d)
    return hi, lo, rest


def _affine_box(b: BBox, affine: np.ndarray) -> BBox:
    x1, y1, x2, y2 = b.tlbr
    corners = np.array([[x1, y1, 1.0], [x2, y1, 1.0], [x1, y2, 1.0], [x2, y2, 1.0]])
    mapped = corners @ affine.T
    lo, hi = mapped.min(axis=0), mapped.max(axis=0)
    return BBox.from_tlbr(lo[0], lo[1], hi[0], hi[1])


def apply_cmc(tracks: Sequence[Track], affine) -> list:
    """Warp each track's last box (all four corners) and Kalman position."""
    A = np.asarray(affine, dtype=float)
    if A.shape != (2, 3) or not np.all(np.isfinite(A)):
        raise ValueError("camera-motion transform must be a finite 2x3 matrix")
    out = []
    for t in tracks:
        kalman = kalman_affine(t.kalman, A) if t.kalman is not None else None
        out.append(dataclasses.replace(t, last_bbox=_affine_box(t.last_bbox, A), kalman=kalman))
    return out


def pairwise_distance(U, V, metric: str) -> np.ndarray:
    U = np.atleast_2d(np.asarray(U, dtype=float))
    V = np.atleast_2d(np.asarray(V, dtype=float))
    if U.shape[1] != V.shape[1]:
        raise ValueError(f"embedding dimensions differ: {U.shape[1]} vs {V.shape[1]}")
    if metric == "euclidean":
        diff = U[:, None, :] - V[None, :, :]
        return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    if metric == "cosine":
        nu = np.linalg.norm(U, axis=1)
        nv = np.linalg.norm(V, axis=1)
        if np.any(nu == 0) or np.any(nv == 0):
            raise ValueError("cosine distance undefined for a zero vector")
        return 1.0 - (U @ V.T) / np.outer(nu, nv)
    raise ValueError(f"unknown metric {metric!r}")


def _track_vector(track: Track, feature: str):
    if feature == "DF":
        return track.direction_centroid
    return track.latest(_EMBEDDING_KIND[feature])


def feature_cost(
    feature: str,
    tracks: Sequence[Track],
    dets: Sequence[Detection],
    metric: str | None = None,
) -> np.ndarray:
    """Cost matrix of one re-ID feature, clamped to [0, 1]."""
    n, m = len(tracks), len(dets)
    if feature == "IOU":
        if n == 0 or m == 0:
            return np.zeros((n, m))
        return 1.0 - iou_matrix([t.last_bbox.to_array() for t in tracks], detections_boxes(dets))
    if feature == "KF":
        missing = [i for i, t in enumerate(tracks) if t.kalman is None]
        if missing:
            raise ConfigError("feature KF selected but some tracks carry no Kalman state")
        if n == 0 or m == 0:
            return np.zeros((n, m))
        predicted = [t.kalman.bbox().to_array() for t in tracks]
        return 1.0 - iou_matrix(predicted, detections_boxes(dets))
    if feature not in _EMBEDDING_KIND:
        raise ConfigError(f"feature {feature!r} does not produce a cost matrix")
    kind = _EMBEDDING_KIND[feature]
    if metric is None:
        metric = "euclidean" if feature == "DF" else "cosine"
    det_vecs = [d.embeddings.get(kind) for d in dets]
    trk_vecs = [_track_vector(t, feature) for t in tracks]
    if any(v is None for v in det_vecs) or any(v is None for v in trk_vecs):
        raise ConfigError(f"feature {feature} selected but {kind} embeddings are missing")
    if n == 0 or m == 0:
        return np.zeros((n, m))
    dist = pairwise_distance(np.stack(trk_vecs), np.stack(det_vecs), metric)
    return np.clip(dist / _METRIC_RANGE[metric], 0.0, 1.0)


def class_gate(cm, tracks: Sequence[Track], dets: Sequence[Detection], mode: str = "hard") -> np.ndarray:
    cm = np.array(cm, dtype=float)
    if mode == "off":
        return cm
    if mode != "hard":
        raise ValueError(f"unknown class gate mode {mode!r}")
    if cm.shape != (len(tracks), len(dets)):
        raise ValueError(f"cost matrix shape {cm.shape} does not match {len(tracks)} tracks x {len(dets)} detections")
    tc = np.array([t.class_id for t in tracks], dtype=int)
    dc = np.array([d.class_id for d in dets], dtype=int)
    cm[tc[:, None] != dc[None, :]] = GATE
    return cm


def _stack(matrices, weights):
    if len(matrices) == 0:
        raise ValueError("ensemble needs at least one cost matrix")
    shapes = {np.shape(m) for m in matrices}
    if len(shapes) != 1 or len(next(iter(shapes))) != 2:
        raise ValueError(f"cost matrices must share one 2-D shape, got {[np.shape(m) for m in matrices]}")
    stack = np.stack([np.asarray(m, dtype=float) for m in matrices])
    if weights is None:
        weights = np.ones(len(matrices))
    w = np.asarray(weights, dtype=float).reshape(-1)
    if len(w) != len(matrices):
        raise ValueError(f"{len(w)} weights for {len(matrices)} matrices")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValueError("ensemble weights must be finite and >= 0")
    if w.sum() <= 0:
        raise ValueError("ensemble weights are all zero")
    return stack, w


def _combine(stack, w, how) -> np.ndarray:
    gated = np.isinf(stack).any(axis=0)
    vals = np.where(np.isinf(stack), 0.0, stack)
    if how == "Min":
        out = np.where(np.isinf(stack), np.inf, stack).min(axis=0)
    else:
        # averaging offsets from the first matrix keeps identical inputs exact
        wn = np.full(len(w), 1.0 / len(w)) if how == "Avg" else w / w.sum()
        out = vals[0] + np.tensordot(wn, vals - vals[0], axes=1)
    return np.where(gated, GATE, out)


def _vote(stack, w, threshold, solver, remainder: np.ndarray) -> Assignment:
    total = w.sum()
    mass = {}
    for mat, weight in zip(stack, w):
        for pair in solver(mat, threshold).pairs:
            mass[pair] = mass.get(pair, 0.0) + weight
    # a pair gated in any input stays gated, whatever the vote
    accepted = sorted(p for p, v in mass.items() if v > total / 2.0 and np.isfinite(remainder[p]))
    rows = {r for r, _ in accepted}
    cols = {c for _, c in accepted}
    free_r = [r for r in range(remainder.shape[0]) if r not in rows]
    free_c = [c for c in range(remainder.shape[1]) if c not in cols]
    rest = solver(remainder[np.ix_(free_r, free_c)], threshold)
    pairs = sorted(accepted + [(free_r[r], free_c[c]) for r, c in rest.pairs])
    used_r = {r for r, _ in pairs}
    used_c = {c for _, c in pairs}
    return Assignment(
        pairs=tuple(pairs),
        unmatched_rows=tuple(r for r in range(remainder.shape[0]) if r not in used_r),
        unmatched_cols=tuple(c for c in range(remainder.shape[1]) if c not in used_c),
        total_cost=math.fsum(remainder[r, c] for r, c in pairs),
    )


def ensemble(
    matrices: Sequence,
    weights=None,
    mode: str = "wAvg",
    threshold: float = np.inf,
    solver: Callable = solve,
):
    """Combine re-ID cost matrices.

    ``Min``, ``Avg`` and ``wAvg`` return the fused cost matrix.  The voting
    modes return an :class:`Assignment`: each matrix is solved on its own,
    pairs chosen by a strict majority (of count for ``Vote``, of weight for
    ``wVote`` and ``wAV``) are accepted, and the leftover rows and columns are
    solved on the averaged matrix (plain for ``Vote``, weighted otherwise).
    A gated cell in any input is gated in the output.  The remainder's
    ``total_cost`` is reported on that averaged matrix.
    """
    stack, w = _stack(matrices, weights)
    if mode in ("Min", "Avg", "wAvg"):
        return _combine(stack, w, mode)
    if mode == "Vote":
        return _vote(stack, np.ones(len(w)), threshold, solver, _combine(stack, w, "Avg"))
    if mode in ("wVote", "wAV"):
        remainder = _combine(stack, w, "wAvg") if mode == "wAV" else _combine(stack, w, "Avg")
        return _vote(stack, w, threshold, solver, remainder)
    raise ValueError(f"unknown ensemble mode {mode!r}")
