"""Domain types, box geometry and the per-perspective track lifecycle."""

from __future__ import annotations

import dataclasses
import enum
import math
from dataclasses import dataclass, field
from typing import Any, Iterable, Sequence

import numpy as np

from .config import AssociationConfig

CONDITION_FLAGS = ("bleeding", "blur", "smoke", "crowded", "occluded", "reflection", "foul_lens", "trocar")


class ToolClass(enum.IntEnum):
    GRASPER = 0
    BIPOLAR = 1
    HOOK = 2
    SCISSORS = 3
    CLIPPER = 4
    IRRIGATOR = 5
    SPECIMEN_BAG = 6

    @property
    def label(self) -> str:
        return self.name.lower()


NUM_CLASSES = len(ToolClass)


class Operator(enum.Enum):
    MSLH = "MSLH"
    MSRH = "MSRH"
    ASRH = "ASRH"
    NULL = "NULL"


class State(enum.IntEnum):
    # ordered so that escalation is a max()
    TRACKED = 0
    LOST = 1
    OOCV = 2
    OOB = 3
    RETIRED = 4


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box, top-left corner plus size, in pixels."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        vals = (self.x, self.y, self.w, self.h)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"non-finite box {vals}")
        if self.w <= 0 or self.h <= 0:
            raise ValueError(f"box must have positive size, got w={self.w} h={self.h}")

    @classmethod
    def from_array(cls, arr) -> "BBox":
        x, y, w, h = (float(v) for v in arr)
        return cls(x, y, w, h)

    @classmethod
    def from_tlbr(cls, x1, y1, x2, y2) -> "BBox":
        return cls(float(x1), float(y1), float(x2 - x1), float(y2 - y1))

    @property
    def center(self) -> tuple:
        return (self.x + self.w / 2.0, self.y + self.h / 2.0)

    @property
    def tlbr(self) -> tuple:
        return (self.x, self.y, self.x + self.w, self.y + self.h)

    @property
    def area(self) -> float:
        return self.w * self.h

    def to_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.w, self.h], dtype=float)

    def shifted(self, dx: float, dy: float) -> "BBox":
        return BBox(self.x + dx, self.y + dy, self.w, self.h)


def iou(a: BBox, b: BBox) -> float:
    ix = min(a.x + a.w, b.x + b.w) - max(a.x, b.x)
    iy = min(a.y + a.h, b.y + b.h) - max(a.y, b.y)
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    # rounding can push identical boxes a hair past 1
    return min(1.0, inter / (a.w * a.h + b.w * b.h - inter))


def iou_matrix(boxes_a, boxes_b) -> np.ndarray:
    """Pairwise IoU of two ``(n, 4)`` / ``(m, 4)`` arrays of ``[x, y, w, h]``."""
    a = np.asarray(boxes_a, dtype=float).reshape(-1, 4)
    b = np.asarray(boxes_b, dtype=float).reshape(-1, 4)
    if len(a) == 0 or len(b) == 0:
        return np.zeros((len(a), len(b)))
    ix = np.minimum(a[:, None, 0] + a[:, None, 2], b[None, :, 0] + b[None, :, 2]) - np.maximum(
        a[:, None, 0], b[None, :, 0]
    )
    iy = np.minimum(a[:, None, 1] + a[:, None, 3], b[None, :, 1] + b[None, :, 3]) - np.maximum(
        a[:, None, 1], b[None, :, 1]
    )
    inter = np.clip(ix, 0, None) * np.clip(iy, 0, None)
    union = (a[:, 2] * a[:, 3])[:, None] + (b[:, 2] * b[:, 3])[None, :] - inter
    return np.minimum(inter / union, 1.0)


def crop_pad_rect(b: BBox, frame_w: float, frame_h: float, pad_frac: float = 0.3):
    """Geometry of the slice-and-pad preprocessing for one detection.

    The box is grown by ``pad_frac`` of its width (height) on each side.  The
    part inside the frame is the crop; what falls outside is reported as
    zero-fill padding ``(left, top, right, bottom)`` so that crop plus padding
    spans the full grown rectangle.
    """
    if not math.isfinite(pad_frac) or pad_frac < 0:
        raise ValueError(f"pad_frac must be finite and >= 0, got {pad_frac}")
    if b.x >= frame_w or b.y >= frame_h or b.x + b.w <= 0 or b.y + b.h <= 0:
        raise ValueError("detection outside frame")
    px, py = pad_frac * b.w, pad_frac * b.h
    x1, y1 = b.x - px, b.y - py
    x2, y2 = b.x + b.w + px, b.y + b.h + py
    cx1, cy1 = max(x1, 0.0), max(y1, 0.0)
    cx2, cy2 = min(x2, float(frame_w)), min(y2, float(frame_h))
    crop = BBox.from_tlbr(cx1, cy1, cx2, cy2)
    return crop, (cx1 - x1, cy1 - y1, x2 - cx2, y2 - cy2)


def _as_vector(v):
    if v is None:
        return None
    arr = np.asarray(v, dtype=float).reshape(-1)
    if not np.all(np.isfinite(arr)):
        raise ValueError("embedding contains non-finite values")
    return arr


def unit(v: np.ndarray) -> np.ndarray:
    n = float(np.linalg.norm(v))
    if n == 0.0:
        raise ValueError("cannot normalize a zero vector")
    return v / n


@dataclass(frozen=True, eq=False)
class EmbeddingSet:
    direction: np.ndarray | None = None
    appearance: np.ndarray | None = None
    similarity: np.ndarray | None = None

    def __post_init__(self):
        for name in ("direction", "appearance", "similarity"):
            object.__setattr__(self, name, _as_vector(getattr(self, name)))

    def normalized(self) -> "EmbeddingSet":
        """Copy with the direction vector scaled to unit length."""
        if self.direction is None:
            return self
        return dataclasses.replace(self, direction=unit(self.direction))

    def get(self, kind: str):
        return getattr(self, kind)

    def to_dict(self) -> dict:
        return {
            k: getattr(self, k).tolist()
            for k in ("direction", "appearance", "similarity")
            if getattr(self, k) is not None
        }

    def __eq__(self, other):
        if not isinstance(other, EmbeddingSet):
            return NotImplemented
        for k in ("direction", "appearance", "similarity"):
            a, b = getattr(self, k), getattr(other, k)
            if (a is None) != (b is None):
                return False
            if a is not None and (a.shape != b.shape or not np.array_equal(a, b)):
                return False
        return True


@dataclass(frozen=True)
class Detection:
    frame: int
    det_index: int
    bbox: BBox
    score: float
    class_id: int
    embeddings: EmbeddingSet = field(default_factory=EmbeddingSet)
    operator_gt: Operator | None = None

    def __post_init__(self):
        if self.frame < 0:
            raise ValueError("frame must be >= 0")
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score must lie in [0, 1], got {self.score}")
        if not 0 <= int(self.class_id) < NUM_CLASSES:
            raise ValueError(f"class_id must be in 0..{NUM_CLASSES - 1}, got {self.class_id}")
        object.__setattr__(self, "class_id", int(self.class_id))


@dataclass(frozen=True)
class PerspectiveIds:
    visibility_id: int
    intracorporeal_id: int
    intraoperative_id: int

    def __post_init__(self):
        if min(self.visibility_id, self.intracorporeal_id, self.intraoperative_id) < 1:
            raise ValueError("perspective IDs start at 1")

    def get(self, perspective: str) -> int:
        return {
            "visibility": self.visibility_id,
            "intracorporeal": self.intracorporeal_id,
            "intraoperative": self.intraoperative_id,
        }[perspective]


@dataclass(frozen=True)
class TrackState:
    state: State = State.TRACKED
    frames_since_seen: int = 0

    def __post_init__(self):
        if self.state is State.TRACKED and self.frames_since_seen != 0:
            raise ValueError("a tracked track has frames_since_seen == 0")
        if self.frames_since_seen < 0:
            raise ValueError("frames_since_seen must be >= 0")


@dataclass
class IdAllocator:
    """Per-perspective counters; each holds the last ID issued."""

    visibility: int = 0
    intracorporeal: int = 0
    intraoperative: int = 0

    def next(self, perspective: str) -> int:
        value = getattr(self, perspective) + 1
        setattr(self, perspective, value)
        return value

    def fresh(self) -> PerspectiveIds:
        return PerspectiveIds(self.next("visibility"), self.next("intracorporeal"), self.next("intraoperative"))


@dataclass
class Track:
    ids: PerspectiveIds
    class_id: int
    state: TrackState
    last_bbox: BBox
    born_frame: int
    last_frame: int
    score: float = 1.0
    kalman: Any = None
    direction_centroid: np.ndarray | None = None
    embedding_history: tuple = ()

    def __post_init__(self):
        if self.last_frame < self.born_frame:
            raise ValueError("last_frame precedes born_frame")

    @property
    def is_live(self) -> bool:
        return self.state.state in (State.TRACKED, State.LOST)

    @property
    def is_inactive(self) -> bool:
        return self.state.state in (State.OOCV, State.OOB)

    def latest(self, kind: str):
        """Most recent non-missing embedding of ``kind`` in the history."""
        for emb in reversed(self.embedding_history):
            v = emb.get(kind)
            if v is not None:
                return v
        return None

    def observe(self, det: Detection, cfg: AssociationConfig) -> "Track":
        """Fold a matched detection into box, class, score and embedding memory."""
        centroid = self.direction_centroid
        d = det.embeddings.direction
        if d is not None:
            d = unit(d)
            if centroid is None:
                centroid = d
            else:
                m = cfg.centroid_momentum
                mixed = m * centroid + (1.0 - m) * d
                norm = np.linalg.norm(mixed)
                # antipodal average cancels out; keep the newest direction then
                centroid = mixed / norm if norm > 1e-12 else d
        history = (self.embedding_history + (det.embeddings,))[-cfg.history_cap :]
        return dataclasses.replace(
            self,
            last_bbox=det.bbox,
            class_id=det.class_id,
            score=det.score,
            direction_centroid=centroid,
            embedding_history=history,
        )


@dataclass(frozen=True)
class FrameObservations:
    frame: int
    detections: tuple = ()
    cmc_transform: np.ndarray | None = None
    condition_flags: frozenset = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "detections", tuple(self.detections))
        if self.cmc_transform is not None:
            m = np.asarray(self.cmc_transform, dtype=float)
            if m.shape != (2, 3) or not np.all(np.isfinite(m)):
                raise ValueError("cmc_transform must be a finite 2x3 matrix")
            object.__setattr__(self, "cmc_transform", m)
        flags = frozenset(self.condition_flags)
        unknown = flags - set(CONDITION_FLAGS)
        if unknown:
            raise ValueError(f"unknown condition flag(s) {sorted(unknown)}")
        object.__setattr__(self, "condition_flags", flags)
        seen = set()
        for det in self.detections:
            if det.frame != self.frame:
                raise ValueError(f"detection of frame {det.frame} filed under frame {self.frame}")
            if det.det_index in seen:
                raise ValueError(f"duplicate det_index {det.det_index} in frame {self.frame}")
            seen.add(det.det_index)


def near_border(b: BBox, frame_size, margin: float) -> bool:
    if frame_size is None:
        return False
    fw, fh = frame_size
    cx, cy = b.center
    return cx <= margin * fw or cx >= (1 - margin) * fw or cy <= margin * fh or cy >= (1 - margin) * fh


def unmatched_state(track: Track, frames_since_seen: int, cfg: AssociationConfig) -> State:
    """Lifecycle state implied by ``frames_since_seen`` frames of absence."""
    lost_limit = cfg.t_lost if near_border(track.last_bbox, cfg.frame_size, cfg.border_margin) else cfg.t_oocv
    if frames_since_seen <= lost_limit:
        computed = State.LOST
    elif frames_since_seen <= cfg.t_oob:
        computed = State.OOCV
    elif frames_since_seen <= cfg.t_retire:
        computed = State.OOB
    else:
        computed = State.RETIRED
    return max(computed, track.state.state)


def transition(track: Track, matched: bool, frame: int, cfg: AssociationConfig, ids: IdAllocator) -> Track:
    """Advance ``track`` by one observation outcome at ``frame``.

    Re-matching keeps every ID from Tracked or Lost, issues a fresh visibility
    ID from OOCV, and fresh visibility and intracorporeal IDs from OOB.  The
    intraoperative ID never changes.
    """
    prev = track.state.state
    if prev is State.RETIRED:
        raise ValueError("retired track reuse")
    if matched:
        if frame < track.last_frame:
            raise ValueError(f"frame {frame} precedes last observation {track.last_frame}")
        new_ids = track.ids
        if prev is State.OOCV:
            new_ids = dataclasses.replace(new_ids, visibility_id=ids.next("visibility"))
        elif prev is State.OOB:
            new_ids = dataclasses.replace(
                new_ids,
                visibility_id=ids.next("visibility"),
                intracorporeal_id=ids.next("intracorporeal"),
            )
        return dataclasses.replace(track, ids=new_ids, state=TrackState(State.TRACKED, 0), last_frame=frame)
    if frame <= track.last_frame:
        raise ValueError(f"unmatched transition needs a later frame than {track.last_frame}, got {frame}")
    gap = frame - track.last_frame
    return dataclasses.replace(track, state=TrackState(unmatched_state(track, gap, cfg), gap))


def check_referential_integrity(vis_ids: Iterable, body_ids: Iterable, op_ids: Iterable) -> None:
    """Raise ``ValueError`` unless vis -> body -> op is a functional chain.

    The three iterables are aligned rows (one entry per emitted box).
    """
    vis_to_body, body_to_op = {}, {}
    for v, b, o in zip(vis_ids, body_ids, op_ids):
        v, b, o = int(v), int(b), int(o)
        if vis_to_body.setdefault(v, b) != b:
            raise ValueError(f"visibility ID {v} maps to intracorporeal IDs {vis_to_body[v]} and {b}")
        if body_to_op.setdefault(b, o) != o:
            raise ValueError(f"intracorporeal ID {b} maps to intraoperative IDs {body_to_op[b]} and {o}")
    n_vis, n_body, n_op = len(vis_to_body), len(body_to_op), len(set(body_to_op.values()))
    if not n_vis >= n_body >= n_op:
        raise ValueError(f"ID counts out of order: {n_vis} vis, {n_body} body, {n_op} op")


def one_hot_class(class_id: int) -> np.ndarray:
    v = np.zeros(NUM_CLASSES)
    v[int(class_id)] = 1.0
    return v


def detections_boxes(dets: Sequence[Detection]) -> np.ndarray:
    return np.array([d.bbox.to_array() for d in dets], dtype=float).reshape(-1, 4)
