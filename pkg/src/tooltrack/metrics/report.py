"""Combined metric report, per-class and per-condition stratification."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

import numpy as np

from ..tables import GroundTruth, TrackTable, perspective_name
from ..track_model import CONDITION_FLAGS, ToolClass
from .clear import eval_clear
from .hota import eval_hota
from .identity import eval_counts, eval_idf1

REPORT_KEYS = (
    "HOTA", "DetA", "AssA", "LocA", "DetRe", "DetPr", "AssRe", "AssPr",
    "MOTA", "MOTP", "MT", "PT", "ML", "IDSW", "Frag",
    "IDF1", "IDR", "IDP", "Dets", "IDs",
)


@dataclass
class EvalInput:
    gt: TrackTable
    pred: TrackTable
    perspective: str = "intraoperative"
    condition_flags: dict | None = None

    def __post_init__(self):
        self.perspective = perspective_name(self.perspective)
        if self.condition_flags is not None:
            flags = {}
            for f, fl in self.condition_flags.items():
                fl = frozenset(fl)
                unknown = fl - set(CONDITION_FLAGS)
                if unknown:
                    raise ValueError(f"unknown condition flag(s) {sorted(unknown)}")
                flags[int(f)] = fl
            self.condition_flags = flags

    @classmethod
    def from_ground_truth(cls, gt: GroundTruth, pred: TrackTable, perspective: str = "intraoperative") -> "EvalInput":
        return cls(gt.table(perspective), pred, perspective, dict(gt.condition_flags))


@dataclass
class MetricsReport:
    HOTA: float
    DetA: float
    AssA: float
    LocA: float
    DetRe: float
    DetPr: float
    AssRe: float
    AssPr: float
    MOTA: float
    MOTP: float
    MT: int
    PT: int
    ML: int
    IDSW: int
    Frag: int
    IDF1: float
    IDR: float
    IDP: float
    Dets: int
    IDs: int
    perspective: str = "intraoperative"
    FPS: float | None = None
    per_class: dict = field(default_factory=dict)
    per_condition: dict = field(default_factory=dict)

    def metrics(self) -> dict:
        return {k: getattr(self, k) for k in REPORT_KEYS}

    def to_dict(self) -> dict:
        out = {"perspective": self.perspective}
        out.update(self.metrics())
        if self.FPS is not None:
            out["FPS"] = self.FPS
        if self.per_class:
            out["per_class"] = {k: v.to_dict() for k, v in self.per_class.items()}
        if self.per_condition:
            out["per_condition"] = {k: v.to_dict() for k, v in self.per_condition.items()}
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


def _evaluate_tables(gt: TrackTable, pred: TrackTable, perspective: str) -> MetricsReport:
    h = eval_hota(gt, pred)
    c = eval_clear(gt, pred)
    i = eval_idf1(gt, pred)
    dets, n_ids = eval_counts(pred)
    return MetricsReport(
        HOTA=h.HOTA, DetA=h.DetA, AssA=h.AssA, LocA=h.LocA, DetRe=h.DetRe, DetPr=h.DetPr, AssRe=h.AssRe,
        AssPr=h.AssPr, MOTA=c.MOTA, MOTP=c.MOTP, MT=c.MT, PT=c.PT, ML=c.ML, IDSW=c.IDSW, Frag=c.Frag,
        IDF1=i.IDF1, IDR=i.IDR, IDP=i.IDP, Dets=dets, IDs=n_ids, perspective=perspective,
    )


def stratify(inp: EvalInput, by: str) -> dict:
    """Reports restricted to each class present in the GT, or to frames carrying each flag."""
    out = {}
    if by == "class":
        for c in np.unique(inp.gt.class_id).tolist():
            name = ToolClass(c).label
            out[name] = _evaluate_tables(
                inp.gt.select(inp.gt.class_id == c), inp.pred.select(inp.pred.class_id == c), inp.perspective
            )
    elif by == "condition":
        if inp.condition_flags is None:
            raise ValueError("condition stratification needs per-frame condition flags")
        for flag in CONDITION_FLAGS:
            frames = np.array(sorted(f for f, fl in inp.condition_flags.items() if flag in fl), dtype=np.int64)
            gt = inp.gt.select(np.isin(inp.gt.frame, frames))
            if len(gt) == 0:
                continue
            out[flag] = _evaluate_tables(gt, inp.pred.select(np.isin(inp.pred.frame, frames)), inp.perspective)
    else:
        raise ValueError(f"unknown stratification {by!r}; expected 'class' or 'condition'")
    return out


def evaluate(inp: EvalInput, by=(), fps: float | None = None) -> MetricsReport:
    """Full report; ``by`` may name ``"class"`` and/or ``"condition"``."""
    if isinstance(by, str):
        by = (by,)
    report = _evaluate_tables(inp.gt, inp.pred, inp.perspective)
    report.FPS = fps
    if "class" in by:
        report.per_class = stratify(inp, "class")
    if "condition" in by:
        report.per_condition = stratify(inp, "condition")
    unknown = set(by) - {"class", "condition"}
    if unknown:
        raise ValueError(f"unknown stratification {sorted(unknown)}")
    return report


def without_fps(report: MetricsReport) -> dict:
    d = report.to_dict()
    d.pop("FPS", None)
    return d


def merge_sequences(pairs) -> tuple:
    """Concatenate several ``(gt, pred)`` sequences with disjoint frames and IDs.

    Evaluating the merged tables pools detections and associations over all
    sequences, which is how multi-video scores are combined.
    """
    gts, preds = [], []
    frame_off = id_off_g = id_off_p = 0
    for gt, pred in pairs:
        gts.append(dataclasses.replace(gt, frame=gt.frame + frame_off, id=gt.id + id_off_g))
        preds.append(dataclasses.replace(pred, frame=pred.frame + frame_off, id=pred.id + id_off_p))
        top = max([0] + gt.frame.tolist() + pred.frame.tolist())
        frame_off += top + 1
        id_off_g += int(gt.id.max(initial=0))
        id_off_p += int(pred.id.max(initial=0))
    return TrackTable.concat(gts), TrackTable.concat(preds)
