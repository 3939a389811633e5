import dataclasses

import numpy as np
import pytest
from scipy.optimize import linear_sum_assignment

from oracles import box_iou
from tooltrack import (
    AssociationConfig,
    BBox,
    Detection,
    FeatureSelection,
    FrameObservations,
    Tracker,
    generate,
    preset,
    run,
)
from tooltrack.errors import ConfigError
from tooltrack.hbgm import TrackerState, step
from tooltrack.sim import Noise, ScenarioSpec, ToolScript, Trocar
from tooltrack.track_model import EmbeddingSet, Operator, State

IOU_ONLY = AssociationConfig(features=FeatureSelection.of("IOU"))
EAST, NORTH = np.array([1.0, 0.0]), np.array([0.0, 1.0])


def d(frame, i, x, y=100.0, score=0.9, cls=0, direction=None, size=40.0):
    emb = EmbeddingSet(direction=direction) if direction is not None else EmbeddingSet()
    return Detection(frame, i, BBox(x, y, size, size), score, cls, emb)


def obs(frame, *dets, cmc=None):
    return FrameObservations(frame, tuple(dets), cmc)


# initialisation and recovery --------------------------------------------------


def test_first_detection_opens_track_one_everywhere():
    state, out = step(TrackerState(), obs(0, d(0, 0, 10, direction=EAST)), AssociationConfig())
    (row,) = out.rows
    assert (row.ids.visibility_id, row.ids.intracorporeal_id, row.ids.intraoperative_id) == (1, 1, 1)
    assert out.log["new"] == 1 and len(state.tracks) == 1


def test_oocv_track_recovers_with_a_fresh_visibility_id():
    cfg = AssociationConfig()
    tracker = Tracker(cfg)
    tracker.update(obs(0, d(0, 0, 400, 200, direction=EAST)))
    for f in range(1, 40):
        tracker.update(obs(f))
    assert tracker.state.tracks[0].state.state is State.OOCV
    # reappears somewhere else, same class and direction
    out = tracker.update(obs(40, d(40, 0, 100, 300, direction=EAST)))
    (row,) = out.rows
    assert (row.ids.visibility_id, row.ids.intracorporeal_id, row.ids.intraoperative_id) == (2, 1, 1)
    assert out.log["recovered_oocv"] == 1 and out.log["new"] == 0


def test_oob_track_recovers_with_fresh_visibility_and_body_ids():
    tracker = Tracker(AssociationConfig())
    tracker.update(obs(0, d(0, 0, 400, 200, direction=NORTH)))
    # absence is only known from frames actually processed
    for f in range(1, 300):
        tracker.update(obs(f))
    assert tracker.state.tracks[0].state.state is State.OOB
    out = tracker.update(obs(300, d(300, 0, 100, 300, direction=NORTH)))
    (row,) = out.rows
    assert (row.ids.visibility_id, row.ids.intracorporeal_id, row.ids.intraoperative_id) == (2, 2, 1)
    assert out.log["recovered_oob"] == 1


def test_recovery_is_class_gated():
    tracker = Tracker(AssociationConfig())
    tracker.update(obs(0, d(0, 0, 400, 200, direction=EAST)))
    out = tracker.update(obs(40, d(40, 0, 100, 300, cls=2, direction=EAST)))
    (row,) = out.rows
    assert row.ids.intraoperative_id == 2


# crossing tools ----------------------------------------------------------------


def crossing_frames():
    """Two graspers on one row swap sides over ten frames, 10 px per frame."""
    frames = []
    for f in range(10):
        a = d(f, 0, 10.0 * f, direction=EAST)
        b = d(f, 1, 90.0 - 10.0 * f, direction=NORTH)
        dets = sorted([a, b], key=lambda x: x.bbox.x)
        frames.append(obs(f, *(dataclasses.replace(x, det_index=k) for k, x in enumerate(dets))))
    return frames


def x_path(tables, track_id):
    t = tables["intraoperative"]
    return t.boxes[t.id == track_id, 0].tolist()


def test_direction_keeps_identities_through_a_crossing():
    tables = run(crossing_frames(), AssociationConfig()).tables
    assert x_path(tables, 1) == [10.0 * f for f in range(10)]
    assert x_path(tables, 2) == [90.0 - 10.0 * f for f in range(10)]


def test_iou_alone_swaps_identities_at_the_crossing():
    tables = run(crossing_frames(), IOU_ONLY).tables
    # hand-simulated: at frame 5 track 1 (last at x=40) prefers the box now at x=40
    assert x_path(tables, 1) == [0, 10, 20, 30, 40, 40, 30, 20, 10, 0]
    assert x_path(tables, 2) == [90, 80, 70, 60, 50, 50, 60, 70, 80, 90]


# BYTE, CMC and invariants ----------------------------------------------------------


def test_low_confidence_detections_never_open_tracks():
    tracker = Tracker(AssociationConfig())
    for f in range(5):
        out = tracker.update(obs(f, d(f, 0, 10.0 * f, score=0.3, direction=EAST)))
        assert out.rows == [] and out.log["new"] == 0


def test_low_confidence_detection_continues_a_track():
    tracker = Tracker(AssociationConfig())
    tracker.update(obs(0, d(0, 0, 100, direction=EAST)))
    out = tracker.update(obs(1, d(1, 0, 104, score=0.3, direction=EAST)))
    assert out.log["stage2"] == 1
    assert [r.ids.intraoperative_id for r in out.rows] == [1]


def test_camera_motion_compensation_keeps_track_through_a_pan():
    cfg = AssociationConfig(features=FeatureSelection.of("IOU", "CMC"))
    frames = [obs(0, d(0, 0, 100)), obs(1, d(1, 0, 300), cmc=[[1, 0, 200], [0, 1, 0]])]
    assert run(frames, cfg).tables["intraoperative"].id.tolist() == [1, 1]
    assert run(frames, IOU_ONLY).tables["intraoperative"].id.tolist() == [1, 2]


def test_kalman_feature_follows_fast_motion():
    # slow start, then 20 px steps: consecutive boxes overlap by IoU 1/3 only
    xs = [8.0 * f for f in range(8)]
    xs += [xs[-1] + 20.0 * k for k in range(1, 13)]
    frames = [obs(f, d(f, 0, x)) for f, x in enumerate(xs)]
    cfg = AssociationConfig(features=FeatureSelection.of("KF"))
    assert set(run(frames, cfg).tables["intraoperative"].id.tolist()) == {1}
    assert len(set(run(frames, IOU_ONLY).tables["intraoperative"].id.tolist())) > 1


def test_each_detection_feeds_one_track_and_vice_versa():
    sim = generate(preset("crowded_four_tools"))
    tracker = Tracker(AssociationConfig())
    for o in sim.observations:
        out = tracker.update(o)
        ids = [r.ids.intraoperative_id for r in out.rows]
        boxes = [r.bbox for r in out.rows]
        assert len(set(ids)) == len(ids)
        assert len(set(boxes)) == len(boxes)
        assert len(out.rows) <= len(o.detections)


def test_out_of_order_frames_are_rejected():
    tracker = Tracker()
    tracker.update(obs(5))
    with pytest.raises(ValueError, match="out-of-order"):
        tracker.update(obs(5))


def test_runs_are_deterministic():
    sim = generate(preset("border_exit"))
    a = run(sim.observations).tables
    b = run(sim.observations).tables
    assert all(a[p].equals(b[p]) for p in a)


def test_run_edge_cases():
    tables = run([]).tables
    assert all(len(t) == 0 for t in tables.values())
    tables = run([obs(3, d(3, 0, 10, direction=EAST), d(3, 1, 200, direction=NORTH))]).tables
    assert tables["visibility"].id.tolist() == [1, 2]
    assert tables["intraoperative"].frame.tolist() == [3, 3]


def test_disabled_perspectives_are_not_emitted():
    cfg = AssociationConfig(perspectives=("intraoperative",))
    assert set(run([obs(0, d(0, 0, 10, direction=EAST))], cfg).tables) == {"intraoperative"}


# simulator round trip -------------------------------------------------------------


def _same_rows(a, b):
    a, b = a.canonical(), b.canonical()
    return (
        len(a) == len(b)
        and np.array_equal(a.frame, b.frame)
        and np.array_equal(a.id, b.id)
        and np.array_equal(a.class_id, b.class_id)
        and np.array_equal(a.boxes, b.boxes)
    )


@pytest.mark.parametrize("name", ["crossing_graspers", "reinsertion", "crowded_four_tools", "border_exit"])
def test_noiseless_presets_reproduce_ground_truth(name):
    sim = generate(dataclasses.replace(preset(name), noise=Noise()))
    out = run(sim.observations, AssociationConfig()).tables
    for perspective, gt in sim.gt.tables().items():
        assert _same_rows(out[perspective], gt), perspective


# plain IOU tracker equivalence ----------------------------------------------------------


def reference_iou_tracker(frames, tau=0.6, high=0.5):
    """Hungarian matching on 1 - IoU against each track's last box; never forgets."""
    tracks, rows = [], []
    for o in frames:
        dets = [x for x in o.detections if x.score >= high]
        cost = np.array([[1 - box_iou(t[1], x.bbox.to_array()) for x in dets] for t in tracks]).reshape(
            len(tracks), len(dets))
        r, c = linear_sum_assignment(cost) if cost.size else ([], [])
        used = set()
        for i, j in zip(r, c):
            if cost[i, j] <= tau:
                tracks[i] = (tracks[i][0], dets[j].bbox.to_array())
                rows.append((o.frame, tracks[i][0], tuple(dets[j].bbox.to_array())))
                used.add(j)
        for j, x in enumerate(dets):
            if j not in used:
                tracks.append((len(tracks) + 1, x.bbox.to_array()))
                rows.append((o.frame, len(tracks), tuple(x.bbox.to_array())))
    return sorted(rows)


def steady_scene(seed):
    """Three tools that stay in view and apart; jittered boxes and occasional misses."""
    tools = (
        ToolScript(0, 0, ((0, "enter_body"), (0, "enter_view")), ((0, 150, 120), (200, 250, 150)), sway=(6, 4, 40)),
        ToolScript(0, 1, ((0, "enter_body"), (0, "enter_view")), ((0, 650, 120), (200, 600, 200)), sway=(5, 5, 55)),
        ToolScript(2, 2, ((0, "enter_body"), (0, "enter_view")), ((0, 420, 380), (200, 380, 360)), sway=(8, 3, 35)),
    )
    trocars = (Trocar((0, 0), Operator.MSLH), Trocar((854, 0), Operator.MSRH), Trocar((427, 480), Operator.ASRH))
    noise = Noise(bbox_sigma=1.5, embedding_sigma=0.05, miss_rate=0.05)
    return ScenarioSpec(seed, 200, (854, 480), trocars, tools, noise)


@pytest.mark.parametrize("seed", range(5))
def test_iou_only_reduces_to_plain_bipartite_tracker(seed):
    sim = generate(steady_scene(seed))
    t = run(sim.observations, IOU_ONLY).tables["intraoperative"]
    ours = sorted((int(f), int(i), tuple(b)) for f, i, b in zip(t.frame, t.id, t.boxes.tolist()))
    assert ours == reference_iou_tracker(sim.observations)


# knowledge-based constraints ---------------------------------------------------------------


KB = AssociationConfig(kb_max_instances={c: 2 if c == 0 else 1 for c in range(7)})


def test_third_grasper_is_forced_onto_an_existing_trajectory():
    tracker = Tracker(KB)
    tracker.update(obs(0, d(0, 0, 100, direction=EAST), d(0, 1, 600, direction=NORTH)))
    # one grasper unseen, a new one appears far away
    out = tracker.update(obs(1, d(1, 0, 100, direction=EAST), d(1, 1, 350, y=300, direction=-EAST)))
    assert sorted(r.ids.intraoperative_id for r in out.rows) == [1, 2]
    assert out.log["kb_forced"] + out.log["kb_relaxed"] == 1
    assert out.log["new"] == 0


def test_cap_without_a_free_trajectory_drops_the_detection():
    tracker = Tracker(KB)
    tracker.update(obs(0, d(0, 0, 100, direction=EAST), d(0, 1, 600, direction=NORTH)))
    out = tracker.update(obs(1, d(1, 0, 100, direction=EAST), d(1, 1, 350, y=300, direction=-EAST),
                             d(1, 2, 600, direction=NORTH)))
    assert len(out.rows) == 2 and out.log["kb_dropped"] == 1


def test_hook_over_a_grasper_is_not_matched():
    for cfg in (KB, AssociationConfig()):
        tracker = Tracker(cfg)
        tracker.update(obs(0, d(0, 0, 100, direction=EAST)))
        out = tracker.update(obs(1, d(1, 0, 100, cls=2, direction=EAST)))
        assert [(r.class_id, r.ids.intraoperative_id) for r in out.rows] == [(2, 2)]


def test_missing_cap_is_a_config_error():
    cfg = AssociationConfig(kb_max_instances={0: 1})
    tracker = Tracker(cfg)
    tracker.update(obs(0, d(0, 0, 100, direction=EAST)))
    with pytest.raises(ConfigError, match="class 3"):
        tracker.update(obs(1, d(1, 0, 100, direction=EAST), d(1, 1, 500, cls=3, direction=NORTH)))
