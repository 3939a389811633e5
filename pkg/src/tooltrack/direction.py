"""Closed-form numerics of the direction and operator estimator.

Covers the attention forward pass, the operator head, the two training
losses with their analytic gradients, the embedding-consistency metric and
the self-supervised pair planner.  No network training happens here.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .track_model import NUM_CLASSES, Detection, one_hot_class

LOG_FLOOR = 1e-12
DEFAULT_MARGIN = 0.5
SOFT_AUGMENTATIONS = ("scale", "perspective", "rotate", "mixed")
NEGATIVE_ROTATION_RANGES = ((80.0, 100.0), (170.0, 190.0))
SOFT_ROTATION_LIMIT = 10.0


def softmax(x, axis=-1) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    z = x - x.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def attention_weights(Q, K) -> np.ndarray:
    """``(n_q, n_k)`` weights: each query's softmax over the keys of K.Q^T / sqrt(d)."""
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    K = np.atleast_2d(np.asarray(K, dtype=float))
    if Q.shape[1] != K.shape[1]:
        raise ValueError(f"query dim {Q.shape[1]} != key dim {K.shape[1]}")
    d = K.shape[1]
    if d < 1 or K.shape[0] < 1:
        raise ValueError("attention needs d >= 1 and at least one key")
    # alignment is K Q^T (keys x queries); normalise over the key axis
    align = (K @ Q.T) / np.sqrt(d)
    return softmax(align, axis=0).T


def attention(Q, K, V, return_weights: bool = False):
    """Scaled dot-product attention; output row i is a convex mix of V's rows."""
    V = np.atleast_2d(np.asarray(V, dtype=float))
    W = attention_weights(Q, K)
    if V.shape[0] != W.shape[1]:
        raise ValueError(f"V has {V.shape[0]} rows but there are {W.shape[1]} keys")
    for name, arr in (("Q", Q), ("K", K), ("V", V)):
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"{name} has non-finite entries")
    out = W @ V
    return (out, W) if return_weights else out


@dataclass(frozen=True, eq=False)
class OperatorHead:
    w: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        w = np.atleast_2d(np.asarray(self.w, dtype=float))
        b = np.asarray(self.b, dtype=float).reshape(-1)
        if w.shape[0] != 4 or b.shape != (4,):
            raise ValueError(f"operator head must map to 4 logits, got w {w.shape}, b {b.shape}")
        if w.shape[1] <= NUM_CLASSES:
            raise ValueError("weight must cover the direction feature plus 7 class slots")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise ValueError("operator head has non-finite entries")
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "b", b)

    @property
    def feature_dim(self) -> int:
        return self.w.shape[1] - NUM_CLASSES


def operator_logits(a, c, head: OperatorHead) -> np.ndarray:
    """Logits over (MSLH, MSRH, ASRH, NULL) from ``w @ [a, c] + b``.

    ``c`` is a class index or a length-7 one-hot vector.
    """
    a = np.asarray(a, dtype=float).reshape(-1)
    c = one_hot_class(c) if np.ndim(c) == 0 else np.asarray(c, dtype=float).reshape(-1)
    if a.shape[0] != head.feature_dim or c.shape[0] != NUM_CLASSES:
        raise ValueError(
            f"expected direction feature of length {head.feature_dim} and {NUM_CLASSES} class slots, "
            f"got {a.shape[0]} and {c.shape[0]}"
        )
    return head.w @ np.concatenate([a, c]) + head.b


def operator_probabilities(a, c, head: OperatorHead) -> np.ndarray:
    return softmax(operator_logits(a, c, head))


def _scalar_or_array(x):
    return float(x) if np.ndim(x) == 0 else x


def weighted_bce(y, y_hat, w=1.0):
    """Class-weighted binary cross-entropy on a logit, and d loss / d logit.

    ``loss = -(y * log(sigmoid(y_hat)) * w + (1 - y) * log(1 - sigmoid(y_hat)))``
    with both logs floored at ``log(1e-12)``.  Inputs broadcast elementwise.
    """
    y = np.asarray(y, dtype=float)
    y_hat = np.asarray(y_hat, dtype=float)
    w = np.asarray(w, dtype=float)
    if np.any(~np.isfinite(w)) or np.any(w <= 0):
        raise ValueError("class weight must be finite and positive")
    log_floor = np.log(LOG_FLOOR)
    log_p = -np.logaddexp(0.0, -y_hat)
    log_q = -np.logaddexp(0.0, y_hat)
    p = np.exp(log_p)
    q = np.exp(log_q)
    loss = -(y * np.maximum(log_p, log_floor) * w + (1.0 - y) * np.maximum(log_q, log_floor))
    # the floor flattens a term, so its derivative vanishes there
    grad = -(y * w * q * (log_p > log_floor)) + (1.0 - y) * p * (log_q > log_floor)
    return _scalar_or_array(loss), _scalar_or_array(grad)


def contrastive_loss(d, y, m: float = DEFAULT_MARGIN):
    """Margin loss for a pair at distance ``d`` (y=1 positive, y=0 negative), and d loss / d d."""
    d = np.asarray(d, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any(d < 0):
        raise ValueError("pair distance must be >= 0")
    if not m > 0:
        raise ValueError("margin must be > 0")
    slack = np.maximum(m - d, 0.0)
    loss = d**2 * y + slack**2 * (1.0 - y)
    grad = 2.0 * d * y - 2.0 * slack * (1.0 - y)
    return _scalar_or_array(loss), _scalar_or_array(grad)


def embedding_distance(u, v, metric: str = "euclidean") -> float:
    u = np.asarray(u, dtype=float).reshape(-1)
    v = np.asarray(v, dtype=float).reshape(-1)
    if u.shape != v.shape:
        raise ValueError(f"dimension mismatch: {u.shape[0]} vs {v.shape[0]}")
    if metric == "euclidean":
        return float(np.linalg.norm(u - v))
    if metric == "cosine":
        nu, nv = np.linalg.norm(u), np.linalg.norm(v)
        if nu == 0 or nv == 0:
            raise ValueError("cosine distance undefined for a zero vector")
        return float(max(0.0, 1.0 - np.dot(u, v) / (nu * nv)))
    raise ValueError(f"unknown metric {metric!r}")


def consistency_pairs(track_series: Mapping, k) -> list:
    """Same-track ``(later, earlier)`` vector pairs ``k`` frames apart.

    ``track_series`` maps a track key to ``{frame: vector}`` (or a sequence of
    ``(frame, vector)``).  ``k="start"`` pairs every later frame with the
    track's first frame.
    """
    pairs = []
    for _, series in sorted(track_series.items(), key=lambda kv: str(kv[0])):
        by_frame = dict(series.items() if isinstance(series, Mapping) else series)
        frames = sorted(by_frame)
        if k == "start":
            first = frames[0]
            pairs.extend((by_frame[t], by_frame[first]) for t in frames[1:])
        else:
            k = int(k)
            if k < 1:
                raise ValueError("k must be >= 1 or 'start'")
            pairs.extend((by_frame[t], by_frame[t - k]) for t in frames if t - k in by_frame)
    return pairs


def consistency_accuracy(track_series: Mapping, k, threshold: float = 0.5, metric: str = "euclidean") -> float:
    """Fraction of same-track embedding pairs ``k`` frames apart closer than ``threshold``."""
    pairs = consistency_pairs(track_series, k)
    if not pairs:
        raise ValueError("no pairs")
    hits = sum(embedding_distance(a, b, metric) < threshold for a, b in pairs)
    return hits / len(pairs)


@dataclass(frozen=True)
class PairPlan:
    pair_type: str  # "positive" | "negative"
    augmentation: str  # soft kind, "rotate" or "cross_tool"
    source_det: int
    partner_det: int | None = None
    angle: float | None = None

    def __post_init__(self):
        if self.pair_type == "positive" and self.augmentation not in SOFT_AUGMENTATIONS:
            raise ValueError("positive pairs use a soft augmentation")
        if self.pair_type == "negative" and self.augmentation not in ("rotate", "cross_tool"):
            raise ValueError("negative pairs come from rotation or a second tool")
        if self.pair_type not in ("positive", "negative"):
            raise ValueError(f"unknown pair type {self.pair_type!r}")


def _soft_plan(rng: np.random.Generator, det_index: int) -> PairPlan:
    kind = SOFT_AUGMENTATIONS[int(rng.integers(len(SOFT_AUGMENTATIONS)))]
    angle = float(rng.uniform(-SOFT_ROTATION_LIMIT, SOFT_ROTATION_LIMIT)) if kind in ("rotate", "mixed") else None
    return PairPlan("positive", kind, det_index, None, angle)


def plan_pairs(frame_dets: Sequence[Detection], rng_seed: int) -> list:
    """Self-supervised pair plan for one frame.

    Several tools: every two tools form a negative pair and each tool gets a
    soft-augmented positive.  One tool: a rotated copy is the negative and a
    soft-augmented copy the positive.
    """
    rng = np.random.default_rng(rng_seed)
    idx = [d.det_index for d in frame_dets]
    plans = []
    if len(idx) >= 2:
        plans.extend(PairPlan("negative", "cross_tool", a, b) for a, b in itertools.combinations(idx, 2))
        plans.extend(_soft_plan(rng, i) for i in idx)
    elif len(idx) == 1:
        lo, hi = NEGATIVE_ROTATION_RANGES[int(rng.integers(2))]
        plans.append(PairPlan("negative", "rotate", idx[0], None, float(rng.uniform(lo, hi))))
        plans.append(_soft_plan(rng, idx[0]))
    return plans
