"""Wire formats: JSON Lines inputs, CSV track tables, run configs, overlays.

Detections file, one JSON object per line, either a detection::

    {"video_id": "v1", "frame": 3, "bbox": [x, y, w, h], "score": 0.9,
     "class_id": 0, "embeddings": {"direction": [...]}, "operator_gt": "MSLH"}

or a frame record carrying per-frame extras (and marking empty frames)::

    {"kind": "frame", "video_id": "v1", "frame": 3,
     "cmc": [[1, 0, 0], [0, 1, 0]], "condition_flags": ["smoke"]}

Frames must not decrease within a video.  Ground truth uses one record per
annotated box with the three perspective IDs, operator and condition flags.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema
import numpy as np

from .config import PERSPECTIVES, AssociationConfig
from .errors import ConfigError, FormatError
from .tables import GroundTruth, TrackTable, perspective_name
from .track_model import (
    CONDITION_FLAGS,
    BBox,
    Detection,
    EmbeddingSet,
    FrameObservations,
    Operator,
    ToolClass,
)

CSV_HEADER = ("frame", "id", "x", "y", "w", "h", "score", "class_id")
TRACK_FILES = {p: f"{p}.csv" for p in PERSPECTIVES}
UNIT_TOL = 1e-12

_NUM = {"type": "number"}
_BBOX = {"type": "array", "items": _NUM, "minItems": 4, "maxItems": 4}
_VEC = {"type": "array", "items": _NUM, "minItems": 1}
_FLAGS = {"type": "array", "items": {"enum": list(CONDITION_FLAGS)}, "uniqueItems": True}
_BASE = {
    "video_id": {"type": "string", "minLength": 1},
    "frame": {"type": "integer", "minimum": 0},
}

DETECTION_SCHEMA = {
    "type": "object",
    "required": ["video_id", "frame", "bbox", "score", "class_id"],
    "additionalProperties": False,
    "properties": {
        **_BASE,
        "kind": {"const": "detection"},
        "bbox": _BBOX,
        "score": {"type": "number", "minimum": 0, "maximum": 1},
        "class_id": {"type": "integer", "minimum": 0, "maximum": len(ToolClass) - 1},
        "embeddings": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"direction": _VEC, "appearance": _VEC, "similarity": _VEC},
        },
        "operator_gt": {"enum": [o.value for o in Operator]},
    },
}

FRAME_SCHEMA = {
    "type": "object",
    "required": ["kind", "video_id", "frame"],
    "additionalProperties": False,
    "properties": {
        **_BASE,
        "kind": {"const": "frame"},
        "cmc": {"type": "array", "items": {"type": "array", "items": _NUM, "minItems": 3, "maxItems": 3},
                "minItems": 2, "maxItems": 2},
        "condition_flags": _FLAGS,
    },
}

GT_SCHEMA = {
    "type": "object",
    "required": ["video_id", "frame", "visibility_id", "intracorporeal_id", "intraoperative_id", "bbox", "class_id"],
    "additionalProperties": False,
    "properties": {
        **_BASE,
        "visibility_id": {"type": "integer", "minimum": 1},
        "intracorporeal_id": {"type": "integer", "minimum": 1},
        "intraoperative_id": {"type": "integer", "minimum": 1},
        "bbox": _BBOX,
        "class_id": {"type": "integer", "minimum": 0, "maximum": len(ToolClass) - 1},
        "operator": {"enum": [o.value for o in Operator]},
        "condition_flags": _FLAGS,
    },
}

EMBEDDING_SCHEMA = {
    "type": "object",
    "required": ["track_id", "frame", "vector"],
    "additionalProperties": False,
    "properties": {
        "video_id": {"type": "string"},
        "track_id": {"type": ["integer", "string"]},
        "frame": {"type": "integer", "minimum": 0},
        "vector": _VEC,
    },
}

_validators = {
    name: jsonschema.Draft202012Validator(schema)
    for name, schema in (
        ("detection", DETECTION_SCHEMA),
        ("frame", FRAME_SCHEMA),
        ("gt", GT_SCHEMA),
        ("embedding", EMBEDDING_SCHEMA),
    )
}


def _records(path, kind_of):
    """Yield ``(line_no, kind, record)`` for each non-blank line, validated."""
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        for no, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"invalid JSON ({exc.msg})", path, no) from None
            kind = kind_of(rec)
            err = jsonschema.exceptions.best_match(_validators[kind].iter_errors(rec))
            if err is not None:
                where = "/".join(str(p) for p in err.absolute_path) or "record"
                raise FormatError(f"{where}: {err.message}", path, no)
            yield no, kind, rec


def _check_order(last: dict, video: str, frame: int, path, no: int):
    if frame < last.get(video, -1):
        raise FormatError(f"frame {frame} of video {video!r} follows frame {last[video]}", path, no)
    last[video] = frame


def _bbox(values, path, no) -> BBox:
    try:
        return BBox(*(float(v) for v in values))
    except ValueError as exc:
        raise FormatError(str(exc), path, no) from None


def _normalize_direction(vec):
    v = np.asarray(vec, dtype=float)
    n = float(np.linalg.norm(v))
    if n == 0.0:
        raise ValueError("direction embedding is a zero vector")
    # already-unit vectors are kept bit-for-bit so re-parsing is stable
    return v if abs(n - 1.0) <= UNIT_TOL else v / n


# detections -----------------------------------------------------------------


def parse_detections(path) -> dict:
    """``{video_id: [FrameObservations, ...]}`` sorted by frame, in file order of videos."""
    frames = defaultdict(dict)  # video -> frame -> {"dets": [], "cmc": ..., "flags": ...}
    last: dict = {}
    kind_of = lambda r: "frame" if isinstance(r, dict) and r.get("kind") == "frame" else "detection"  # noqa: E731
    for no, kind, rec in _records(path, kind_of):
        video, frame = rec["video_id"], rec["frame"]
        _check_order(last, video, frame, path, no)
        slot = frames[video].setdefault(frame, {"dets": [], "cmc": None, "flags": frozenset(), "seen": False})
        if kind == "frame":
            if slot["seen"]:
                raise FormatError(f"duplicate frame record for frame {frame}", path, no)
            slot["seen"] = True
            slot["cmc"] = np.array(rec["cmc"], dtype=float) if "cmc" in rec else None
            slot["flags"] = frozenset(rec.get("condition_flags", ()))
            continue
        emb = dict(rec.get("embeddings", {}))
        try:
            if "direction" in emb:
                emb["direction"] = _normalize_direction(emb["direction"])
            det = Detection(
                frame=frame,
                det_index=len(slot["dets"]),
                bbox=_bbox(rec["bbox"], path, no),
                score=float(rec["score"]),
                class_id=rec["class_id"],
                embeddings=EmbeddingSet(**emb),
                operator_gt=Operator(rec["operator_gt"]) if "operator_gt" in rec else None,
            )
        except ValueError as exc:
            if isinstance(exc, FormatError):
                raise
            raise FormatError(str(exc), path, no) from None
        slot["dets"].append(det)
    out = {}
    for video, by_frame in frames.items():
        out[video] = [
            FrameObservations(f, tuple(s["dets"]), s["cmc"], s["flags"]) for f, s in sorted(by_frame.items())
        ]
    return out


def _num(x: float):
    x = float(x)
    return int(x) if x.is_integer() and abs(x) < 2**53 else x


def detection_records(video_id: str, observations) -> list:
    """Canonical records: one frame record per frame, then its detections in order."""
    recs = []
    for obs in observations:
        frame_rec = {"kind": "frame", "video_id": video_id, "frame": int(obs.frame)}
        if obs.cmc_transform is not None:
            frame_rec["cmc"] = [[_num(v) for v in row] for row in obs.cmc_transform]
        if obs.condition_flags:
            frame_rec["condition_flags"] = [f for f in CONDITION_FLAGS if f in obs.condition_flags]
        recs.append(frame_rec)
        for det in obs.detections:
            rec = {
                "video_id": video_id,
                "frame": int(det.frame),
                "bbox": [_num(v) for v in det.bbox.to_array()],
                "score": _num(det.score),
                "class_id": int(det.class_id),
            }
            emb = det.embeddings.to_dict()
            if emb:
                rec["embeddings"] = emb
            if det.operator_gt is not None:
                rec["operator_gt"] = det.operator_gt.value
            recs.append(rec)
    return recs


def _write_lines(path, records) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(json.dumps(rec, separators=(",", ":"), allow_nan=False))
            fh.write("\n")


def write_detections(videos: dict, path) -> None:
    """Write ``{video_id: observations}`` in canonical form."""
    _write_lines(path, [r for v, obs in videos.items() for r in detection_records(v, obs)])


# ground truth ---------------------------------------------------------------


def parse_ground_truth(path) -> dict:
    """``{video_id: GroundTruth}``; perspective IDs are checked over each whole video."""
    rows = defaultdict(list)
    flags = defaultdict(lambda: defaultdict(set))
    last: dict = {}
    for no, _, rec in _records(path, lambda r: "gt"):
        video, frame = rec["video_id"], rec["frame"]
        _check_order(last, video, frame, path, no)
        box = _bbox(rec["bbox"], path, no)
        rows[video].append((frame, rec["visibility_id"], rec["intracorporeal_id"], rec["intraoperative_id"],
                            box.to_array(), rec["class_id"], rec.get("operator", Operator.NULL.value)))
        flags[video][frame].update(rec.get("condition_flags", ()))
    out = {}
    for video, rs in rows.items():
        f, v, b, o, boxes, c, op = zip(*rs)
        gt = GroundTruth(np.array(f), np.array(v), np.array(b), np.array(o), np.array(boxes), np.array(c),
                         np.array(op, dtype=object), {k: frozenset(s) for k, s in flags[video].items()})
        try:
            gt.check_integrity()
        except ValueError as exc:
            raise FormatError(f"video {video!r}: {exc}", path) from None
        out[video] = gt
    return out


def gt_records(video_id: str, gt: GroundTruth) -> list:
    recs = []
    for k in range(len(gt)):
        f = int(gt.frame[k])
        rec = {
            "video_id": video_id,
            "frame": f,
            "visibility_id": int(gt.visibility_id[k]),
            "intracorporeal_id": int(gt.intracorporeal_id[k]),
            "intraoperative_id": int(gt.intraoperative_id[k]),
            "bbox": [_num(x) for x in gt.boxes[k]],
            "class_id": int(gt.class_id[k]),
            "operator": str(gt.operator[k]),
            "condition_flags": [fl for fl in CONDITION_FLAGS if fl in gt.condition_flags.get(f, ())],
        }
        recs.append(rec)
    return recs


def write_ground_truth(videos: dict, path) -> None:
    _write_lines(path, [r for v, gt in videos.items() for r in gt_records(v, gt.sorted())])


# embeddings for the consistency metric ---------------------------------------


def parse_embeddings(path) -> dict:
    """``{track_key: {frame: vector}}``; keys are ``(video_id, track_id)`` when videos are named."""
    series = defaultdict(dict)
    for no, _, rec in _records(path, lambda r: "embedding"):
        key = (rec["video_id"], rec["track_id"]) if "video_id" in rec else rec["track_id"]
        if rec["frame"] in series[key]:
            raise FormatError(f"duplicate frame {rec['frame']} for track {key!r}", path, no)
        series[key][rec["frame"]] = np.asarray(rec["vector"], dtype=float)
    return dict(series)


def write_embeddings(rows, path) -> None:
    """``rows`` of ``(video_id, track_id, frame, vector)``."""
    _write_lines(
        path,
        [
            {"video_id": v, "track_id": t, "frame": int(f), "vector": [float(x) for x in vec]}
            for v, t, f, vec in rows
        ],
    )


# track tables ---------------------------------------------------------------


def format_tracks(table: TrackTable) -> str:
    buf = io.StringIO()
    buf.write(",".join(CSV_HEADER) + "\n")
    t = table.sorted()
    for k in range(len(t)):
        x, y, w, h = t.boxes[k]
        buf.write(
            f"{t.frame[k]},{t.id[k]},{x:.6f},{y:.6f},{w:.6f},{h:.6f},{t.score[k]:.6f},{t.class_id[k]}\n"
        )
    return buf.getvalue()


def write_tracks(tables: dict, outdir) -> list:
    """One CSV per perspective in ``outdir``; returns the written paths."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    paths = []
    for p, table in tables.items():
        path = outdir / TRACK_FILES[perspective_name(p)]
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(format_tracks(table))
        paths.append(path)
    return paths


def read_tracks(path) -> TrackTable:
    path = Path(path)
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != CSV_HEADER:
            raise FormatError(f"expected header {','.join(CSV_HEADER)}", path, 1)
        rows = []
        for no, row in enumerate(reader, 2):
            if len(row) != len(CSV_HEADER):
                raise FormatError(f"expected {len(CSV_HEADER)} columns, got {len(row)}", path, no)
            try:
                rows.append((int(row[0]), int(row[1]), [float(v) for v in row[2:6]], float(row[6]), int(row[7])))
            except ValueError as exc:
                raise FormatError(str(exc), path, no) from None
    return TrackTable.from_rows(rows)


def read_track_dir(outdir, perspective: str) -> TrackTable:
    return read_tracks(Path(outdir) / TRACK_FILES[perspective_name(perspective)])


# overlay --------------------------------------------------------------------


def overlay_frames(table: TrackTable, trail_frames: int = 50) -> list:
    """Per-frame drawable rows: box, class name, ``[id]`` label and recent centre trail."""
    t = table.sorted()
    history = defaultdict(list)  # id -> [(frame, cx, cy)]
    frames = []
    for f in t.frames().tolist():
        objects = []
        for k in np.flatnonzero(t.frame == f).tolist():
            tid = int(t.id[k])
            x, y, w, h = (float(v) for v in t.boxes[k])
            history[tid].append((f, x + w / 2.0, y + h / 2.0))
            trail = [[round(cx, 6), round(cy, 6)] for g, cx, cy in history[tid] if f - g < trail_frames]
            name = ToolClass(int(t.class_id[k])).label
            objects.append({
                "bbox": [round(v, 6) for v in (x, y, w, h)],
                "class_name": name,
                "track_id": tid,
                "label": f"{name} [{tid}]",
                "trail": trail,
            })
        frames.append({"frame": f, "objects": objects})
    return frames


def write_overlay(table: TrackTable, path, fps: float = 25.0, perspective: str = "intraoperative") -> None:
    doc = {
        "perspective": perspective_name(perspective),
        "trail_seconds": 2,
        "frames": overlay_frames(table, int(round(2 * fps))),
    }
    write_json(doc, path)


def write_json(doc, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps(doc, indent=2, allow_nan=False))
        fh.write("\n")


# run configuration ----------------------------------------------------------

METRIC_OPTIONS = {"perspective": "intraoperative", "by": [], "fps": 25}


@dataclass
class RunConfig:
    association: AssociationConfig = field(default_factory=AssociationConfig)
    metrics: dict = field(default_factory=lambda: dict(METRIC_OPTIONS))
    output_dir: str | None = None

    def to_dict(self) -> dict:
        return {**self.association.to_dict(), "metrics": dict(self.metrics), "output_dir": self.output_dir}


def config_from_dict(data: dict) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a JSON object")
    data = dict(data)
    metrics = dict(METRIC_OPTIONS)
    extra = data.pop("metrics", None) or {}
    if not isinstance(extra, dict):
        raise ConfigError("metrics must be an object")
    unknown = set(extra) - set(METRIC_OPTIONS)
    if unknown:
        raise ConfigError(f"unknown metrics option(s): {sorted(unknown)}")
    metrics.update(extra)
    try:
        metrics["perspective"] = perspective_name(metrics["perspective"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    by = metrics["by"]
    metrics["by"] = [by] if isinstance(by, str) else list(by)
    if set(metrics["by"]) - {"class", "condition"}:
        raise ConfigError("metrics.by accepts 'class' and 'condition'")
    if not (isinstance(metrics["fps"], (int, float)) and metrics["fps"] > 0 and math.isfinite(metrics["fps"])):
        raise ConfigError("metrics.fps must be a positive number")
    output_dir = data.pop("output_dir", None)
    return RunConfig(AssociationConfig.from_dict(data), metrics, output_dir)


def load_config(path) -> RunConfig:
    """Read a run config; omitted fields take their defaults."""
    if path is None:
        return RunConfig()
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: invalid JSON ({exc.msg})") from None
    return config_from_dict(data)


def save_config(cfg: RunConfig, path) -> None:
    write_json(cfg.to_dict(), path)


def ensure_writable(path) -> None:
    path = Path(path)
    target = path if path.exists() else path.parent
    while not target.exists():
        target = target.parent
    if not os.access(target, os.W_OK):
        raise PermissionError(f"cannot write to {path}")
