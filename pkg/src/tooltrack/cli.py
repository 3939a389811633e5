"""Command-line entry point.

Exit status is 0 on success, 2 for usage or configuration errors and 1 for
any other failure.  Results go to files or stdout, diagnostics to stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import formats
from .direction import consistency_accuracy
from .errors import ConfigError
from .hbgm import run
from .metrics import EvalInput, evaluate, fps_harness, merge_sequences
from .sim import PRESETS, generate, preset
from .tables import perspective_name

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(f"{self.prog}: error: {message}")


class _UsageError(Exception):
    pass


def _csv_list(text: str) -> list:
    return [t.strip() for t in text.split(",") if t.strip()]


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="tooltrack", description="Multi-perspective surgical tool tracking.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    t = sub.add_parser("track", help="track detections and write per-perspective CSVs")
    t.add_argument("--dets", required=True, help="detections JSONL")
    t.add_argument("--config", help="run config JSON (defaults for omitted fields)")
    t.add_argument("--out", help="output directory (overrides output_dir in the config)")
    t.add_argument("--gt", help="ground-truth JSONL; writes metrics.json when given")
    t.add_argument("--overlay", action="store_true", help="also write overlay.json")

    e = sub.add_parser("eval", help="score track CSVs against ground truth")
    e.add_argument("--gt", required=True)
    e.add_argument("--pred", required=True, help="directory written by `track`")
    e.add_argument("--perspective", default="op", choices=["vis", "body", "op"])
    e.add_argument("--by", choices=["class", "condition"], action="append", default=[])

    s = sub.add_parser("simulate", help="write a preset scenario as detections and ground truth")
    s.add_argument("--preset", required=True, choices=PRESETS)
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int)

    c = sub.add_parser("consistency", help="embedding consistency accuracy")
    c.add_argument("--embeddings", required=True, help="JSONL of {track_id, frame, vector}")
    c.add_argument("--k", default="1,5,25,start")
    c.add_argument("--threshold", type=float, default=0.5)
    c.add_argument("--metric", choices=["euclidean", "cosine"], default="euclidean")

    b = sub.add_parser("bench", help="HOTA of a preset at several frame rates")
    b.add_argument("--preset", required=True, choices=PRESETS)
    b.add_argument("--rates", default="1,5,25")
    b.add_argument("--config")
    b.add_argument("--seed", type=int)
    b.add_argument("--perspective", default="op", choices=["vis", "body", "op"])
    return p


def _print_json(doc) -> None:
    sys.stdout.write(json.dumps(doc, indent=2) + "\n")


def _video_dir(out: Path, video: str, n_videos: int) -> Path:
    return out if n_videos == 1 else out / video


def cmd_track(args) -> int:
    rc = formats.load_config(args.config)
    out = args.out or rc.output_dir
    if out is None:
        raise ConfigError("no output directory: pass --out or set output_dir")
    out = Path(out)
    videos = formats.parse_detections(args.dets)
    gts = formats.parse_ground_truth(args.gt) if args.gt else None
    reports = {}
    for video, observations in videos.items():
        result = run(observations, rc.association)
        vdir = _video_dir(out, video, len(videos))
        formats.write_tracks(result.tables, vdir)
        if args.overlay:
            op = result.tables.get("intraoperative")
            if op is not None:
                formats.write_overlay(op, vdir / "overlay.json", rc.metrics["fps"])
        print(f"{video}: {len(observations)} frames at {result.fps:.1f} frames/s", file=sys.stderr)
        if gts is not None:
            if video not in gts:
                raise ValueError(f"ground truth has no video {video!r}")
            persp = rc.metrics["perspective"]
            inp = EvalInput.from_ground_truth(gts[video], result.tables[persp], persp)
            reports[video] = evaluate(inp, by=rc.metrics["by"]).to_dict()
    if gts is not None:
        formats.write_json(reports, out / "metrics.json")
    return EXIT_OK


def eval_report(gt_path, pred_dir, perspective: str, by=()):
    """The report `eval` prints, as a library call."""
    perspective = perspective_name(perspective)
    gts = formats.parse_ground_truth(gt_path)
    pred_dir = Path(pred_dir)
    if len(gts) == 1:
        (video, gt), = gts.items()
        pred = formats.read_track_dir(pred_dir, perspective)
        return evaluate(EvalInput.from_ground_truth(gt, pred, perspective), by=by)
    if by:
        raise ConfigError("--by is only supported for a single video")
    pairs = [(gt.table(perspective), formats.read_track_dir(pred_dir / v, perspective)) for v, gt in gts.items()]
    g, p = merge_sequences(pairs)
    return evaluate(EvalInput(g, p, perspective))


def cmd_eval(args) -> int:
    if not Path(args.gt).is_file():
        raise FileNotFoundError(f"ground-truth file not found: {args.gt}")
    _print_json(eval_report(args.gt, args.pred, args.perspective, args.by).to_dict())
    return EXIT_OK


def cmd_simulate(args) -> int:
    sim = generate(preset(args.preset, args.seed))
    out = Path(args.out)
    video = sim.spec.name
    formats.write_detections({video: sim.observations}, out / "detections.jsonl")
    formats.write_ground_truth({video: sim.gt}, out / "gt.jsonl")
    rows = [
        (video, sim.truth[(obs.frame, det.det_index)], obs.frame, det.embeddings.direction)
        for obs in sim.observations
        for det in obs.detections
        if (obs.frame, det.det_index) in sim.truth
    ]
    formats.write_embeddings(rows, out / "embeddings.jsonl")
    print(f"wrote {len(sim.observations)} frames of {video} to {out}", file=sys.stderr)
    return EXIT_OK


def cmd_consistency(args) -> int:
    series = formats.parse_embeddings(args.embeddings)
    ks = []
    for k in _csv_list(args.k):
        if k != "start":
            try:
                k = int(k)
            except ValueError:
                raise ConfigError(f"--k expects integers or 'start', got {k!r}") from None
        ks.append(k)
    _print_json({str(k): consistency_accuracy(series, k, args.threshold, args.metric) for k in ks})
    return EXIT_OK


def bench_table(preset_name: str, rates, cfg=None, seed=None, perspective: str = "op") -> dict:
    """``{rate: HOTA}`` as printed by `bench`."""
    sim = generate(preset(preset_name, seed))
    reports = fps_harness(sim.observations, sim.gt, cfg, rates, perspective_name(perspective))
    return {str(r): reports[r].HOTA for r in rates}


def cmd_bench(args) -> int:
    try:
        rates = [int(r) for r in _csv_list(args.rates)]
    except ValueError:
        raise ConfigError(f"--rates expects integers, got {args.rates!r}") from None
    cfg = formats.load_config(args.config).association
    table = bench_table(args.preset, rates, cfg, args.seed, args.perspective)
    _print_json({"preset": args.preset, "perspective": perspective_name(args.perspective), "HOTA": table})
    return EXIT_OK


COMMANDS = {
    "track": cmd_track,
    "eval": cmd_eval,
    "simulate": cmd_simulate,
    "consistency": cmd_consistency,
    "bench": cmd_bench,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"tooltrack: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ValueError, ArithmeticError) as exc:
        print(f"tooltrack: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
