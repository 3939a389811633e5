"""Deterministic synthetic surgical scenes.

Each tool is bound to a trocar (and so to an operator).  Its box centre
follows piecewise-linear waypoints, optionally with a sinusoidal sway, and an
event script says when it enters or leaves the body and the camera view.
Ground truth carries all three perspective IDs; detections carry oracle
embeddings:

* direction: the trocar's angle seen from the frame centre, a unit 2-vector
  lifted to ``embedding_dim`` by a seeded orthonormal map, plus jitter;
* appearance and similarity: a per-class prototype plus jitter, so two
  instances of one class look alike.

Jitter of standard deviation ``s`` adds noise whose expected norm is about
``s`` whatever the dimension.  All randomness comes from per-purpose streams
spawned from the scenario seed and is drawn whether or not it is used, so
raising a noise rate changes nothing but the quantity it controls.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .tables import GroundTruth
from .track_model import (
    BBox,
    Detection,
    EmbeddingSet,
    FrameObservations,
    Operator,
    ToolClass,
    iou,
    unit,
)

EVENTS = ("enter_body", "enter_view", "leave_view", "leave_body")
PRESETS = ("crossing_graspers", "reinsertion", "crowded_four_tools", "border_exit")
APPEARANCE_DIM = 64
TRUE_SCORE = 0.9
CROWDED_AT = 4
OCCLUSION_IOU = 0.3

# state machine over (in_body, in_view)
_NEXT = {
    ("enter_body", (False, False)): (True, False),
    ("enter_view", (True, False)): (True, True),
    ("leave_view", (True, True)): (True, False),
    ("leave_body", (True, False)): (False, False),
}


@dataclass(frozen=True)
class Trocar:
    anchor: tuple
    operator: Operator

    def __post_init__(self):
        object.__setattr__(self, "anchor", (float(self.anchor[0]), float(self.anchor[1])))
        object.__setattr__(self, "operator", Operator(self.operator))


@dataclass(frozen=True)
class ToolScript:
    """One instrument: class, trocar index, events ``(tick, kind)`` and motion.

    ``waypoints`` are ``(tick, cx, cy)`` box centres, interpolated linearly and
    held constant outside their range.  ``sway`` is ``(amp_x, amp_y, period)``.
    """

    class_id: int
    trocar: int
    events: tuple
    waypoints: tuple
    size: tuple = (60.0, 60.0)
    sway: tuple | None = None

    def __post_init__(self):
        object.__setattr__(self, "class_id", int(ToolClass(self.class_id)))
        object.__setattr__(self, "events", tuple((int(t), str(k)) for t, k in self.events))
        wps = tuple((int(t), float(x), float(y)) for t, x, y in self.waypoints)
        if not wps:
            raise ValueError("a tool needs at least one waypoint")
        if any(b[0] <= a[0] for a, b in zip(wps, wps[1:])):
            raise ValueError("waypoint ticks must increase strictly")
        object.__setattr__(self, "waypoints", wps)
        if self.size[0] <= 0 or self.size[1] <= 0:
            raise ValueError("tool box size must be positive")

    def intervals(self, frame_count: int):
        """Body and view intervals ``[start, stop)`` implied by the event script."""
        state = (False, False)
        body, view = [], []
        body_start = view_start = None
        last = -1
        for tick, kind in self.events:
            if kind not in EVENTS:
                raise ValueError(f"malformed script: unknown event {kind!r}")
            if tick < last:
                raise ValueError("malformed script: events out of order")
            if not 0 <= tick <= frame_count:
                raise ValueError(f"malformed script: tick {tick} outside 0..{frame_count}")
            nxt = _NEXT.get((kind, state))
            if nxt is None:
                raise ValueError(f"malformed script: {kind} at tick {tick} while in_body={state[0]} in_view={state[1]}")
            if kind == "enter_body":
                body_start = tick
            elif kind == "enter_view":
                view_start = tick
            elif kind == "leave_view":
                view.append((view_start, tick))
            else:
                body.append((body_start, tick))
            state, last = nxt, tick
        if state[1]:
            view.append((view_start, frame_count))
        if state[0]:
            body.append((body_start, frame_count))
        return body, view

    def center(self, tick: int) -> tuple:
        ticks = [w[0] for w in self.waypoints]
        cx = float(np.interp(tick, ticks, [w[1] for w in self.waypoints]))
        cy = float(np.interp(tick, ticks, [w[2] for w in self.waypoints]))
        if self.sway is not None:
            ax, ay, period = self.sway
            phase = 2.0 * math.pi * tick / period
            cx += ax * math.sin(phase)
            cy += ay * math.cos(phase)
        return cx, cy

    def box(self, tick: int) -> BBox:
        cx, cy = self.center(tick)
        w, h = self.size
        return BBox(cx - w / 2.0, cy - h / 2.0, w, h)


@dataclass(frozen=True)
class Noise:
    bbox_sigma: float = 0.0
    embedding_sigma: float = 0.0
    false_positive_rate: float = 0.0
    miss_rate: float = 0.0

    def __post_init__(self):
        if self.bbox_sigma < 0 or self.embedding_sigma < 0:
            raise ValueError("noise scales must be >= 0")
        for name in ("false_positive_rate", "miss_rate"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")


@dataclass(frozen=True)
class ScenarioSpec:
    seed: int
    frame_count: int
    frame_size: tuple
    trocars: tuple
    tools: tuple
    noise: Noise = field(default_factory=Noise)
    embedding_dim: int = 128
    name: str = "custom"

    def __post_init__(self):
        object.__setattr__(self, "trocars", tuple(self.trocars))
        object.__setattr__(self, "tools", tuple(self.tools))
        if self.frame_count < 1:
            raise ValueError("frame_count must be >= 1")
        if self.embedding_dim < 2:
            raise ValueError("embedding_dim must be >= 2")
        ops = [t.operator for t in self.trocars]
        if len(set(ops)) != len(ops):
            raise ValueError("each trocar needs its own operator")
        for tool in self.tools:
            if not 0 <= tool.trocar < len(self.trocars):
                raise ValueError(f"tool refers to missing trocar {tool.trocar}")
            tool.intervals(self.frame_count)

    def trocar_angle(self, index: int) -> float:
        fw, fh = self.frame_size
        ax, ay = self.trocars[index].anchor
        return math.atan2(ay - fh / 2.0, ax - fw / 2.0)


@dataclass
class SimOutput:
    spec: ScenarioSpec
    observations: tuple
    gt: GroundTruth
    operators: dict  # intraoperative id -> Operator
    direction_basis: np.ndarray
    truth: dict = field(default_factory=dict)  # (frame, det_index) -> intraoperative id

    def gt_tables(self) -> dict:
        return self.gt.tables()


def _lift(basis: np.ndarray, angle: float) -> np.ndarray:
    return basis @ np.array([math.cos(angle), math.sin(angle)])


def _jittered(base: np.ndarray, noise: np.ndarray, sigma: float) -> np.ndarray:
    return unit(base + sigma * noise / math.sqrt(len(base)))


def _allocate_ids(spec: ScenarioSpec):
    """Per tool: ``[(view_start, view_stop, vis, body, op)]`` in event order."""
    events = []
    for ti, tool in enumerate(spec.tools):
        for pos, (tick, kind) in enumerate(tool.events):
            events.append((tick, ti, pos, kind))
    events.sort()
    counters = {"vis": 0, "body": 0, "op": 0}
    op_of, body_of, vis_of, view_start = {}, {}, {}, {}
    spans = {ti: [] for ti in range(len(spec.tools))}
    for tick, ti, _, kind in events:
        if kind == "enter_body":
            if ti not in op_of:
                counters["op"] += 1
                op_of[ti] = counters["op"]
            counters["body"] += 1
            body_of[ti] = counters["body"]
        elif kind == "enter_view":
            counters["vis"] += 1
            vis_of[ti] = counters["vis"]
            view_start[ti] = tick
        elif kind == "leave_view":
            spans[ti].append((view_start.pop(ti), tick, vis_of[ti], body_of[ti], op_of[ti]))
    for ti in list(view_start):
        spans[ti].append((view_start[ti], spec.frame_count, vis_of[ti], body_of[ti], op_of[ti]))
    return spans, op_of


def _frame_flags(boxes: list, n_visible: int) -> frozenset:
    flags = set()
    if n_visible >= CROWDED_AT:
        flags.add("crowded")
    for i in range(len(boxes)):
        for j in range(i + 1, len(boxes)):
            if iou(boxes[i], boxes[j]) > OCCLUSION_IOU:
                flags.add("occluded")
    return frozenset(flags)


def generate(spec: ScenarioSpec) -> SimOutput:
    """Render ``spec`` into observations and three-perspective ground truth."""
    root = np.random.SeedSequence(spec.seed)
    r_basis, r_proto, r_miss, r_box, r_emb, r_fp = (np.random.default_rng(s) for s in root.spawn(6))
    D = spec.embedding_dim
    basis, _ = np.linalg.qr(r_basis.standard_normal((D, 2)))
    protos = r_proto.standard_normal((2, len(ToolClass), APPEARANCE_DIM))
    protos /= np.linalg.norm(protos, axis=2, keepdims=True)
    dir_base = [_lift(basis, spec.trocar_angle(t.trocar)) for t in spec.tools]
    spans, op_of = _allocate_ids(spec)
    fw, fh = spec.frame_size
    nz = spec.noise
    n_tools = len(spec.tools)

    gt_rows, observations, flags_by_frame, truth = [], [], {}, {}
    for frame in range(spec.frame_count):
        # fixed-shape draws keep every stream aligned across noise settings
        u_miss = r_miss.random(n_tools)
        box_noise = r_box.standard_normal((n_tools, 4))
        dir_noise = r_emb.standard_normal((n_tools, D))
        app_noise = r_emb.standard_normal((n_tools, 2, APPEARANCE_DIM))
        u_fp, fx, fy, fs, fscore = r_fp.random(5)
        f_cls = int(r_fp.integers(len(ToolClass)))
        f_dir = r_fp.standard_normal(D)
        f_app = r_fp.standard_normal((2, APPEARANCE_DIM))

        raw, gt_boxes = [], []
        for ti, tool in enumerate(spec.tools):
            span = next((s for s in spans[ti] if s[0] <= frame < s[1]), None)
            if span is None:
                continue
            box = tool.box(frame)
            op = spec.trocars[tool.trocar].operator
            gt_rows.append((frame, span[2], span[3], span[4], box.to_array(), tool.class_id, op.value))
            gt_boxes.append(box)
            if u_miss[ti] < nz.miss_rate:
                continue
            jitter = nz.bbox_sigma * box_noise[ti]
            w = max(box.w + jitter[2], 1.0)
            h = max(box.h + jitter[3], 1.0)
            det_box = BBox(box.x + jitter[0], box.y + jitter[1], w, h) if nz.bbox_sigma > 0 else box
            emb = EmbeddingSet(
                direction=_jittered(dir_base[ti], dir_noise[ti], nz.embedding_sigma),
                appearance=_jittered(protos[0, tool.class_id], app_noise[ti, 0], nz.embedding_sigma),
                similarity=_jittered(protos[1, tool.class_id], app_noise[ti, 1], nz.embedding_sigma),
            )
            raw.append((det_box, TRUE_SCORE, tool.class_id, emb, op, span[4]))
        if u_fp < nz.false_positive_rate:
            side = 30.0 + 50.0 * fs
            fp_box = BBox(fx * (fw - side), fy * (fh - side), side, side)
            emb = EmbeddingSet(
                direction=unit(f_dir),
                appearance=unit(f_app[0]),
                similarity=unit(f_app[1]),
            )
            raw.append((fp_box, 0.2 + 0.6 * float(fscore), f_cls, emb, None, None))
        raw.sort(key=lambda r: (r[0].x, r[0].y))
        dets = tuple(Detection(frame, k, *r[:5]) for k, r in enumerate(raw))
        truth.update({(frame, k): r[5] for k, r in enumerate(raw) if r[5] is not None})
        flags = _frame_flags(gt_boxes, len(gt_boxes))
        if flags:
            flags_by_frame[frame] = flags
        observations.append(FrameObservations(frame, dets, None, flags))

    if gt_rows:
        f, v, b, o, boxes, c, op = zip(*gt_rows)
        gt = GroundTruth(np.array(f), np.array(v), np.array(b), np.array(o), np.array(boxes), np.array(c),
                         np.array(op, dtype=object), flags_by_frame)
    else:
        gt = GroundTruth(condition_flags=flags_by_frame)
    gt = gt.sorted()
    gt.check_integrity()
    operators = {op_of[ti]: spec.trocars[t.trocar].operator for ti, t in enumerate(spec.tools) if ti in op_of}
    return SimOutput(spec, tuple(observations), gt, operators, basis, truth)


# presets ------------------------------------------------------------------

FRAME = (854, 480)


def _orbit(start: int, stop: int, centre: tuple, radius: float, phase: float, turns: int) -> list:
    """Per-tick waypoints circling ``centre`` ``turns`` times, starting at angle ``phase``."""
    ticks = np.arange(start, stop + 1)
    ang = phase + 2.0 * math.pi * turns * (ticks - start) / (stop - start)
    return [(int(t), centre[0] + radius * math.cos(a), centre[1] + radius * math.sin(a)) for t, a in zip(ticks, ang)]


def _crossing_graspers() -> ScenarioSpec:
    # Two graspers circle near their own side (about 3.8 px per frame, a
    # quarter turn per second, so one-second samples never overlap), then
    # cross the frame on one line.  The crossing is offset by half a frame so
    # the two boxes never coincide exactly.
    trocars = (Trocar((0.0, 0.0), Operator.MSLH), Trocar((854.0, 0.0), Operator.MSRH))
    a = _orbit(0, 200, (200.0, 240.0), 60.0, 0.0, 2) + _orbit(300, 500, (560.0, 240.0), 60.0, math.pi, 2)
    b = _orbit(0, 200, (562.4, 240.0), 60.0, math.pi, 2) + _orbit(300, 500, (202.4, 240.0), 60.0, 0.0, 2)
    enter = ((0, "enter_body"), (0, "enter_view"))
    tools = (
        ToolScript(ToolClass.GRASPER, 0, enter, a, (50.0, 50.0)),
        ToolScript(ToolClass.GRASPER, 1, enter, b, (50.0, 50.0)),
    )
    return ScenarioSpec(7, 500, FRAME, trocars, tools, Noise(embedding_sigma=0.05), name="crossing_graspers")


def _reinsertion() -> ScenarioSpec:
    # withdrawn at 100 and re-inserted at 400: longer than the OOB timer
    trocars = (Trocar((854.0, 240.0), Operator.MSRH),)
    events = ((0, "enter_body"), (0, "enter_view"), (100, "leave_view"), (100, "leave_body"),
              (400, "enter_body"), (400, "enter_view"))
    path = ((0, 600.0, 240.0), (100, 500.0, 260.0), (400, 560.0, 220.0), (500, 450.0, 250.0))
    tools = (ToolScript(ToolClass.HOOK, 0, events, path, (70.0, 60.0), (6.0, 4.0, 40.0)),)
    return ScenarioSpec(11, 500, FRAME, trocars, tools, Noise(bbox_sigma=0.5, embedding_sigma=0.05),
                        name="reinsertion")


def _crowded_four_tools() -> ScenarioSpec:
    trocars = (
        Trocar((0.0, 120.0), Operator.MSLH),
        Trocar((854.0, 120.0), Operator.MSRH),
        Trocar((427.0, 0.0), Operator.ASRH),
    )
    always = ((0, "enter_body"), (0, "enter_view"))
    tools = (
        ToolScript(ToolClass.GRASPER, 0, always, ((0, 200.0, 200.0), (250, 330.0, 300.0), (500, 220.0, 220.0)),
                   (60.0, 60.0), (10.0, 8.0, 60.0)),
        ToolScript(ToolClass.GRASPER, 2, always, ((0, 430.0, 150.0), (250, 470.0, 330.0), (500, 400.0, 160.0)),
                   (60.0, 60.0), (8.0, 10.0, 50.0)),
        # hook and clipper share a trocar: an instrument exchange
        ToolScript(ToolClass.HOOK, 1, ((0, "enter_body"), (0, "enter_view"), (220, "leave_view"), (230, "leave_body")),
                   ((0, 650.0, 260.0), (220, 560.0, 300.0)), (70.0, 50.0), (6.0, 6.0, 45.0)),
        ToolScript(ToolClass.CLIPPER, 1, ((260, "enter_body"), (270, "enter_view")),
                   ((270, 700.0, 240.0), (500, 580.0, 280.0)), (70.0, 50.0), (6.0, 6.0, 45.0)),
    )
    noise = Noise(bbox_sigma=1.0, embedding_sigma=0.05, false_positive_rate=0.02, miss_rate=0.02)
    return ScenarioSpec(23, 500, FRAME, trocars, tools, noise, name="crowded_four_tools")


def _border_exit() -> ScenarioSpec:
    # slips past the left edge for 60 frames while staying in the body
    trocars = (Trocar((0.0, 400.0), Operator.MSLH), Trocar((854.0, 400.0), Operator.ASRH))
    tools = (
        ToolScript(ToolClass.GRASPER, 0, ((0, "enter_body"), (0, "enter_view"), (150, "leave_view"), (210, "enter_view")),
                   ((0, 300.0, 250.0), (150, 40.0, 260.0), (210, 40.0, 260.0), (400, 280.0, 240.0)), (60.0, 60.0)),
        ToolScript(ToolClass.IRRIGATOR, 1, ((0, "enter_body"), (0, "enter_view")),
                   ((0, 650.0, 300.0), (400, 600.0, 260.0)), (50.0, 80.0), (5.0, 5.0, 80.0)),
    )
    return ScenarioSpec(31, 400, FRAME, trocars, tools, Noise(bbox_sigma=0.5, embedding_sigma=0.05),
                        name="border_exit")


_PRESETS = {
    "crossing_graspers": _crossing_graspers,
    "reinsertion": _reinsertion,
    "crowded_four_tools": _crowded_four_tools,
    "border_exit": _border_exit,
}


def preset(name: str, seed: int | None = None) -> ScenarioSpec:
    """Named fixed scenario; ``seed`` overrides only the noise and embedding seed."""
    try:
        spec = _PRESETS[name]()
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; expected one of {', '.join(PRESETS)}") from None
    if seed is not None:
        from dataclasses import replace

        spec = replace(spec, seed=int(seed))
    return spec


def _random_events(rng: np.random.Generator, frame_count: int) -> tuple:
    """One to three body stays, each holding one or two view intervals."""
    n_body = int(rng.integers(1, 4))
    cuts = np.sort(rng.choice(np.arange(1, frame_count), size=2 * n_body - 1, replace=False))
    bounds = [0, *cuts.tolist(), frame_count]
    events = []
    for k in range(n_body):
        b0, b1 = bounds[2 * k], bounds[2 * k + 1]
        events.append((b0, "enter_body"))
        if b1 - b0 >= 8 and rng.random() < 0.5:
            v = sorted(rng.choice(np.arange(b0 + 1, b1), size=3, replace=False).tolist())
            events += [(b0, "enter_view"), (v[0], "leave_view"), (v[1], "enter_view"), (v[2], "leave_view")]
        else:
            events += [(b0, "enter_view"), (b1, "leave_view")]
        events.append((b1, "leave_body"))
    if events[-1][0] == frame_count:
        events = events[:-2]  # let the last stay run to the end
    return tuple(events)


def random_scenario(seed: int, frame_count: int = 500, max_tools: int = 4, noise: Noise | None = None) -> ScenarioSpec:
    """Randomised but fully seeded scenario with up to ``max_tools`` tools."""
    rng = np.random.default_rng(seed)
    fw, fh = FRAME
    n_troc = int(rng.integers(2, 4))
    ops = rng.permutation([Operator.MSLH, Operator.MSRH, Operator.ASRH])[:n_troc]
    trocars = []
    for op in ops:
        edge = int(rng.integers(3))
        pos = float(rng.uniform(0.1, 0.9))
        anchor = {0: (0.0, pos * fh), 1: (fw, pos * fh), 2: (pos * fw, 0.0)}[edge]
        trocars.append(Trocar(anchor, op))
    tools = []
    for _ in range(int(rng.integers(1, max_tools + 1))):
        cls = int(rng.choice([0, 0, 1, 2, 3, 4, 5, 6]))
        ticks = np.linspace(0, frame_count, int(rng.integers(2, 6))).round().astype(int)
        wps = tuple((int(t), float(rng.uniform(100, fw - 100)), float(rng.uniform(80, fh - 80))) for t in ticks)
        size = (float(rng.uniform(40, 80)), float(rng.uniform(40, 80)))
        sway = (float(rng.uniform(0, 8)), float(rng.uniform(0, 8)), float(rng.uniform(30, 90)))
        tools.append(ToolScript(cls, int(rng.integers(n_troc)), _random_events(rng, frame_count), wps, size, sway))
    if noise is None:
        noise = Noise(bbox_sigma=1.0, embedding_sigma=0.05, false_positive_rate=0.02, miss_rate=0.02)
    return ScenarioSpec(int(seed), frame_count, FRAME, tuple(trocars), tuple(tools), noise, name=f"random_{seed}")
