"""Column-oriented track tables shared by the tracker, metrics and file I/O."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import PERSPECTIVES
from .track_model import CONDITION_FLAGS, check_referential_integrity

PERSPECTIVE_ALIASES = {
    "vis": "visibility",
    "visibility": "visibility",
    "body": "intracorporeal",
    "intracorporeal": "intracorporeal",
    "op": "intraoperative",
    "intraoperative": "intraoperative",
}


def perspective_name(name: str) -> str:
    try:
        return PERSPECTIVE_ALIASES[name]
    except KeyError:
        raise ValueError(f"unknown perspective {name!r}; expected vis, body or op") from None


@dataclass(eq=False)
class TrackTable:
    """Rows of ``(frame, id, x, y, w, h, score, class_id)``."""

    frame: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    id: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    boxes: np.ndarray = field(default_factory=lambda: np.zeros((0, 4)))
    score: np.ndarray = field(default_factory=lambda: np.zeros(0))
    class_id: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def __post_init__(self):
        self.frame = np.asarray(self.frame, dtype=np.int64).reshape(-1)
        n = len(self.frame)
        self.id = np.asarray(self.id, dtype=np.int64).reshape(-1)
        self.boxes = np.asarray(self.boxes, dtype=float).reshape(-1, 4)
        self.score = np.asarray(self.score, dtype=float).reshape(-1)
        self.class_id = np.asarray(self.class_id, dtype=np.int64).reshape(-1)
        if not (len(self.id) == len(self.boxes) == len(self.score) == len(self.class_id) == n):
            raise ValueError("track table columns differ in length")
        if n and np.any(self.id < 1):
            raise ValueError("track IDs must be positive")

    @classmethod
    def from_rows(cls, rows) -> "TrackTable":
        """Build from an iterable of ``(frame, id, bbox4, score, class_id)``."""
        rows = list(rows)
        if not rows:
            return cls()
        frame, ids, boxes, score, cls_ = zip(*rows)
        return cls(np.array(frame), np.array(ids), np.array(boxes, dtype=float), np.array(score), np.array(cls_))

    def __len__(self):
        return len(self.frame)

    def select(self, mask) -> "TrackTable":
        mask = np.asarray(mask)
        return TrackTable(self.frame[mask], self.id[mask], self.boxes[mask], self.score[mask], self.class_id[mask])

    def sorted(self) -> "TrackTable":
        order = np.lexsort((self.id, self.frame))
        return self.select(order)

    def frames(self) -> np.ndarray:
        return np.unique(self.frame)

    def ids(self) -> np.ndarray:
        return np.unique(self.id)

    def relabeled(self, mapping) -> "TrackTable":
        return TrackTable(self.frame, np.array([mapping[i] for i in self.id.tolist()], dtype=np.int64),
                          self.boxes, self.score, self.class_id)

    def canonical(self) -> "TrackTable":
        """IDs renumbered 1, 2, ... in order of first appearance (frame, then box x, y)."""
        t = self.sorted()
        order = np.lexsort((t.boxes[:, 1], t.boxes[:, 0], t.frame))
        mapping = {}
        for i in t.id[order].tolist():
            mapping.setdefault(i, len(mapping) + 1)
        return t.relabeled(mapping).sorted()

    def equals(self, other: "TrackTable", atol: float = 0.0) -> bool:
        if len(self) != len(other):
            return False
        a, b = self.sorted(), other.sorted()
        return (
            np.array_equal(a.frame, b.frame)
            and np.array_equal(a.id, b.id)
            and np.array_equal(a.class_id, b.class_id)
            and np.allclose(a.boxes, b.boxes, rtol=0, atol=atol)
            and np.allclose(a.score, b.score, rtol=0, atol=atol)
        )

    @classmethod
    def concat(cls, tables) -> "TrackTable":
        tables = list(tables)
        if not tables:
            return cls()
        return cls(
            np.concatenate([t.frame for t in tables]),
            np.concatenate([t.id for t in tables]),
            np.concatenate([t.boxes for t in tables]),
            np.concatenate([t.score for t in tables]),
            np.concatenate([t.class_id for t in tables]),
        )


@dataclass(eq=False)
class GroundTruth:
    """Annotated boxes carrying all three perspective IDs.

    ``condition_flags`` maps a frame to the visual conditions present in it.
    """

    frame: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    visibility_id: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    intracorporeal_id: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    intraoperative_id: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    boxes: np.ndarray = field(default_factory=lambda: np.zeros((0, 4)))
    class_id: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    operator: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=object))
    condition_flags: dict = field(default_factory=dict)

    def __post_init__(self):
        self.frame = np.asarray(self.frame, dtype=np.int64).reshape(-1)
        for name in ("visibility_id", "intracorporeal_id", "intraoperative_id", "class_id"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=np.int64).reshape(-1))
        self.boxes = np.asarray(self.boxes, dtype=float).reshape(-1, 4)
        self.operator = np.asarray(self.operator, dtype=object).reshape(-1)
        n = len(self.frame)
        cols = (self.visibility_id, self.intracorporeal_id, self.intraoperative_id, self.boxes, self.class_id, self.operator)
        if any(len(c) != n for c in cols):
            raise ValueError("ground-truth columns differ in length")
        flags = {}
        for f, fl in self.condition_flags.items():
            fl = frozenset(fl)
            unknown = fl - set(CONDITION_FLAGS)
            if unknown:
                raise ValueError(f"unknown condition flag(s) {sorted(unknown)}")
            if fl:
                flags[int(f)] = fl
        self.condition_flags = flags

    def __len__(self):
        return len(self.frame)

    def ids(self, perspective: str) -> np.ndarray:
        return {
            "visibility": self.visibility_id,
            "intracorporeal": self.intracorporeal_id,
            "intraoperative": self.intraoperative_id,
        }[perspective_name(perspective)]

    def table(self, perspective: str) -> TrackTable:
        return TrackTable(self.frame, self.ids(perspective), self.boxes, np.ones(len(self)), self.class_id)

    def tables(self) -> dict:
        return {p: self.table(p) for p in PERSPECTIVES}

    def select(self, mask) -> "GroundTruth":
        mask = np.asarray(mask)
        frames = set(self.frame[mask].tolist())
        return GroundTruth(
            self.frame[mask], self.visibility_id[mask], self.intracorporeal_id[mask],
            self.intraoperative_id[mask], self.boxes[mask], self.class_id[mask], self.operator[mask],
            {f: v for f, v in self.condition_flags.items() if f in frames},
        )

    def sorted(self) -> "GroundTruth":
        order = np.lexsort((self.visibility_id, self.frame))
        gt = self.select(order)
        gt.condition_flags = dict(self.condition_flags)
        return gt

    def check_integrity(self) -> None:
        check_referential_integrity(self.visibility_id, self.intracorporeal_id, self.intraoperative_id)
