"""Harmonizing bipartite graph matching tracker.

One call to :func:`step` runs the per-frame pipeline:

1. camera-motion compensation and Kalman prediction of live tracks;
2. confidence split of the detections;
3. first association of live (tracked or lost) tracks with confident
   detections on the selected re-ID costs;
4. optional second association of leftover tracks with low-confidence
   detections on box overlap and class;
5. harmonization: matched tracks absorb their detection, unmatched ones age
   through the lifecycle and may turn OOCV, OOB or retired;
6. recovery of OOCV and OOB tracks from leftover confident detections using
   direction and class only;
7. knowledge-based instance caps (when enabled) and new tracks;
8. one output row per tracked track and perspective.
"""

from __future__ import annotations

import dataclasses
import math
import time
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .assignment import Assignment, solve
from .config import PERSPECTIVES, AssociationConfig
from .costs import (
    apply_cmc,
    byte_split,
    class_gate,
    ensemble,
    feature_cost,
    kalman_initiate,
    kalman_predict,
    kalman_update,
)
from .errors import ConfigError
from .tables import TrackTable
from .track_model import (
    Detection,
    FrameObservations,
    IdAllocator,
    PerspectiveIds,
    State,
    Track,
    TrackState,
    transition,
    unit,
)


@dataclass
class TrackerState:
    tracks: list = field(default_factory=list)
    ids: IdAllocator = field(default_factory=IdAllocator)
    cursor: int = -1

    @property
    def live_tracks(self) -> list:
        return [t for t in self.tracks if t.is_live]

    @property
    def inactive_pool(self) -> list:
        return [t for t in self.tracks if t.is_inactive]


@dataclass(frozen=True)
class OutputRow:
    ids: PerspectiveIds
    bbox: tuple
    score: float
    class_id: int


@dataclass
class FrameOutput:
    frame: int
    rows: list
    log: dict


def _metric(cfg: AssociationConfig, feature: str) -> str:
    return cfg.direction_metric if feature == "DF" else cfg.appearance_metric


def _gate_mode(cfg: AssociationConfig) -> str:
    return "hard" if ("MC" in cfg.features or cfg.kb_enabled) else "off"


def _feature_matrices(tracks, dets, cfg: AssociationConfig, gate: str) -> list:
    return [
        class_gate(feature_cost(f, tracks, dets, _metric(cfg, f)), tracks, dets, gate)
        for f in cfg.features.cost_features
    ]


def associate(tracks: Sequence[Track], dets: Sequence[Detection], cfg: AssociationConfig) -> Assignment:
    """First-stage association on the configured re-ID feature ensemble."""
    if not tracks or not dets:
        return solve(np.zeros((len(tracks), len(dets))), cfg.match_threshold)
    mats = _feature_matrices(tracks, dets, cfg, _gate_mode(cfg))
    fused = ensemble(mats, cfg.features.weight_vector(), cfg.ensemble_mode, cfg.match_threshold, solve)
    if isinstance(fused, Assignment):
        return fused
    return solve(fused, cfg.match_threshold)


def _new_track(det: Detection, frame: int, cfg: AssociationConfig, ids: IdAllocator) -> Track:
    d = det.embeddings.direction
    kalman = None
    if "KF" in cfg.features:
        kalman = kalman_initiate(det.bbox, cfg.process_noise, cfg.measurement_noise)
    return Track(
        ids=ids.fresh(),
        class_id=det.class_id,
        state=TrackState(State.TRACKED, 0),
        last_bbox=det.bbox,
        born_frame=frame,
        last_frame=frame,
        score=det.score,
        kalman=kalman,
        direction_centroid=unit(d) if d is not None else None,
        embedding_history=(det.embeddings,),
    )


def _absorb(track: Track, det: Detection, frame: int, cfg: AssociationConfig, ids: IdAllocator) -> Track:
    """Matched update: memory, motion state, then the lifecycle re-match rules."""
    resumed = track.state.state in (State.OOCV, State.OOB)
    t = track.observe(det, cfg)
    if "KF" in cfg.features:
        if t.kalman is None or resumed:
            kalman = kalman_initiate(det.bbox, cfg.process_noise, cfg.measurement_noise)
        else:
            kalman = kalman_update(t.kalman, det.bbox)
        t = dataclasses.replace(t, kalman=kalman)
    return transition(t, True, frame, cfg, ids)


def _kb_cost(tracks, dets, cfg: AssociationConfig) -> np.ndarray:
    return ensemble(_feature_matrices(tracks, dets, cfg, "hard"), cfg.features.weight_vector(), "wAvg")


def kb_constrain(
    tracks: list,
    dets: Sequence[Detection],
    taken: set,
    frame: int,
    cfg: AssociationConfig,
    ids: IdAllocator,
):
    """Apply the per-class intraoperative instance caps to would-be new tracks.

    A detection may open a new trajectory only while its class holds fewer
    intraoperative IDs than its cap.  Otherwise the acceptance threshold is
    relaxed in ``kb_step`` increments up to ``kb_ceiling`` until the detection
    joins an existing same-class trajectory that is free this frame; past the
    ceiling it is forced onto the cheapest such trajectory.  A capped
    detection with no free trajectory of its class is dropped.

    Returns ``(tracks, openers, log)`` where ``openers`` may start new tracks.
    """
    caps = cfg.kb_max_instances
    for d in dets:
        if d.class_id not in caps:
            raise ConfigError(f"KB cap missing for class {d.class_id}")
    held = Counter(
        c for c, _ in {(t.class_id, t.ids.intraoperative_id) for t in tracks if t.state.state is not State.RETIRED}
    )
    openers, blocked = [], []
    for d in dets:
        if held[d.class_id] < caps[d.class_id]:
            openers.append(d)
            held[d.class_id] += 1
        else:
            blocked.append(d)
    log = {"kb_relaxed": 0, "kb_forced": 0, "kb_dropped": 0}
    free = [i for i, t in enumerate(tracks) if i not in taken and t.state.state is not State.RETIRED]
    thresholds = []
    tau = cfg.match_threshold
    while tau < cfg.kb_ceiling - 1e-12:
        tau = min(round(tau + cfg.kb_step, 10), cfg.kb_ceiling)
        thresholds.append(tau)
    thresholds.append(math.inf)
    for tau in thresholds:
        if not blocked or not free:
            break
        cands = [tracks[i] for i in free]
        a = solve(_kb_cost(cands, blocked, cfg), tau)
        used = set()
        for r, c in a.pairs:
            i = free[r]
            tracks[i] = _absorb(tracks[i], blocked[c], frame, cfg, ids)
            log["kb_forced" if math.isinf(tau) else "kb_relaxed"] += 1
            used.add(c)
        taken.update(free[r] for r, _ in a.pairs)
        free = [i for i in free if i not in taken]
        blocked = [d for j, d in enumerate(blocked) if j not in used]
    log["kb_dropped"] = len(blocked)
    return tracks, openers, log


def step(state: TrackerState, obs: FrameObservations, cfg: AssociationConfig):
    """Advance ``state`` by one frame in place; returns ``(state, FrameOutput)``."""
    frame = obs.frame
    if frame <= state.cursor:
        raise ValueError(f"out-of-order frame {frame} after {state.cursor}")
    feats = cfg.features
    ids = state.ids
    tracks = list(state.tracks)
    live_idx = [i for i, t in enumerate(tracks) if t.is_live]

    # (1) motion
    if "CMC" in feats and obs.cmc_transform is not None and live_idx:
        warped = apply_cmc([tracks[i] for i in live_idx], obs.cmc_transform)
        for i, t in zip(live_idx, warped):
            tracks[i] = t
    if "KF" in feats:
        for i in live_idx:
            if tracks[i].kalman is not None:
                tracks[i] = dataclasses.replace(tracks[i], kalman=kalman_predict(tracks[i].kalman))

    # (2) confidence split
    if "BYTE" in feats:
        high, low, _ = byte_split(obs.detections, cfg.byte_high, cfg.byte_low)
    else:
        high = [d for d in obs.detections if d.score >= cfg.byte_high]
        low = []

    # (3) first association
    matches = {}
    a1 = associate([tracks[i] for i in live_idx], high, cfg)
    for r, c in a1.pairs:
        matches[live_idx[r]] = high[c]
    used_high = {c for _, c in a1.pairs}

    # (4) second association on low-confidence detections
    n_stage2 = 0
    if "BYTE" in feats and low:
        rest_idx = [i for i in live_idx if i not in matches]
        rest = [tracks[i] for i in rest_idx]
        if rest:
            cm = class_gate(feature_cost("IOU", rest, low), rest, low, "hard")
            a2 = solve(cm, cfg.match_threshold)
            for r, c in a2.pairs:
                matches[rest_idx[r]] = low[c]
            n_stage2 = len(a2.pairs)

    # (5) harmonization
    inactive_idx = [i for i, t in enumerate(tracks) if t.is_inactive]
    for i in live_idx:
        if i in matches:
            tracks[i] = _absorb(tracks[i], matches[i], frame, cfg, ids)
        else:
            tracks[i] = transition(tracks[i], False, frame, cfg, ids)

    # (6) recovery from the inactive pool on direction and class only
    leftover = [d for j, d in enumerate(high) if j not in used_high]
    recovered = {}
    n_recovered = {"oocv": 0, "oob": 0}
    if "DF" in feats:
        for pool_state, tau, key in (
            (State.OOCV, cfg.oocv_threshold, "oocv"),
            (State.OOB, cfg.oob_threshold, "oob"),
        ):
            pool = [i for i in inactive_idx if tracks[i].state.state is pool_state]
            if not pool or not leftover:
                continue
            pool_tracks = [tracks[i] for i in pool]
            cm = class_gate(
                feature_cost("DF", pool_tracks, leftover, cfg.direction_metric), pool_tracks, leftover, "hard"
            )
            a = solve(cm, tau)
            for r, c in a.pairs:
                recovered[pool[r]] = leftover[c]
            n_recovered[key] = len(a.pairs)
            taken_cols = {c for _, c in a.pairs}
            leftover = [d for j, d in enumerate(leftover) if j not in taken_cols]
    for i in inactive_idx:
        if i in recovered:
            tracks[i] = _absorb(tracks[i], recovered[i], frame, cfg, ids)
        else:
            tracks[i] = transition(tracks[i], False, frame, cfg, ids)

    # (7) instance caps, then new tracks from confident leftovers only
    kb_log = {}
    if cfg.kb_enabled and leftover:
        taken = set(matches) | set(recovered)
        tracks, leftover, kb_log = kb_constrain(tracks, leftover, taken, frame, cfg, ids)
    born = [_new_track(d, frame, cfg, ids) for d in leftover]
    tracks.extend(born)

    retired = sum(t.state.state is State.RETIRED for t in tracks)
    state.tracks = [t for t in tracks if t.state.state is not State.RETIRED]
    state.cursor = frame

    # (8) emit
    rows = [
        OutputRow(t.ids, (t.last_bbox.x, t.last_bbox.y, t.last_bbox.w, t.last_bbox.h), t.score, t.class_id)
        for t in state.tracks
        if t.state.state is State.TRACKED and t.last_frame == frame
    ]
    log = {
        "frame": frame,
        "detections": len(obs.detections),
        "high": len(high),
        "low": len(low),
        "stage1": len(a1.pairs),
        "stage2": n_stage2,
        "recovered_oocv": n_recovered["oocv"],
        "recovered_oob": n_recovered["oob"],
        "new": len(born),
        "retired": retired,
        "live": sum(t.is_live for t in state.tracks),
        "inactive": sum(t.is_inactive for t in state.tracks),
        **kb_log,
    }
    return state, FrameOutput(frame, rows, log)


class Tracker:
    """Stateful wrapper around :func:`step` for one video."""

    def __init__(self, cfg: AssociationConfig | None = None):
        self.cfg = cfg or AssociationConfig()
        self.state = TrackerState()

    def update(self, obs: FrameObservations) -> FrameOutput:
        self.state, out = step(self.state, obs, self.cfg)
        return out


@dataclass
class RunResult:
    tables: dict
    log: list
    elapsed: float

    @property
    def fps(self) -> float:
        return len(self.log) / self.elapsed if self.elapsed > 0 else math.inf


def outputs_to_tables(outputs: Iterable[FrameOutput], perspectives=PERSPECTIVES) -> dict:
    rows = {p: [] for p in perspectives}
    for out in outputs:
        for row in out.rows:
            for p in perspectives:
                rows[p].append((out.frame, row.ids.get(p), row.bbox, row.score, row.class_id))
    return {p: TrackTable.from_rows(r).sorted() for p, r in rows.items()}


def run(observations: Iterable[FrameObservations], cfg: AssociationConfig | None = None) -> RunResult:
    """Track a whole video; one table per enabled perspective plus the per-frame log."""
    cfg = cfg or AssociationConfig()
    tracker = Tracker(cfg)
    start = time.perf_counter()
    outputs = [tracker.update(obs) for obs in observations]
    elapsed = time.perf_counter() - start
    return RunResult(outputs_to_tables(outputs, cfg.perspectives), [o.log for o in outputs], elapsed)
