import json
import subprocess
import sys

import pytest

from tooltrack import formats
from tooltrack.cli import bench_table, eval_report, main
from tooltrack.direction import consistency_accuracy


@pytest.fixture(scope="module")
def scene(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert main(["simulate", "--preset", "border_exit", "--out", str(root / "sim")]) == 0
    return root


def test_simulate_writes_three_files(scene):
    assert sorted(p.name for p in (scene / "sim").iterdir()) == ["detections.jsonl", "embeddings.jsonl", "gt.jsonl"]


def test_track_then_eval_pipeline(scene, capsys):
    sim, out = scene / "sim", scene / "run"
    code = main(["track", "--dets", str(sim / "detections.jsonl"), "--out", str(out),
                 "--gt", str(sim / "gt.jsonl"), "--overlay"])
    assert code == 0
    assert sorted(p.name for p in out.iterdir()) == [
        "intracorporeal.csv", "intraoperative.csv", "metrics.json", "overlay.json", "visibility.csv"]
    capsys.readouterr()
    assert main(["eval", "--gt", str(sim / "gt.jsonl"), "--pred", str(out), "--perspective", "vis",
                 "--by", "class"]) == 0
    printed = json.loads(capsys.readouterr().out)
    assert printed == eval_report(sim / "gt.jsonl", out, "vis", ["class"]).to_dict()
    assert printed["perspective"] == "visibility" and set(printed["per_class"]) == {"grasper", "irrigator"}


def test_missing_gt_file_is_a_runtime_error(scene, capsys):
    missing = scene / "nowhere.jsonl"
    assert main(["eval", "--gt", str(missing), "--pred", str(scene)]) == 1
    assert str(missing) in capsys.readouterr().err


def test_malformed_input_names_file_and_line(tmp_path, capsys):
    bad = tmp_path / "d.jsonl"
    bad.write_text('{"video_id": "v", "frame": 0}\n')
    assert main(["track", "--dets", str(bad), "--out", str(tmp_path / "o")]) == 1
    assert f"{bad}:1" in capsys.readouterr().err


@pytest.mark.parametrize("argv", [
    [],
    ["track"],
    ["bench", "--preset", "nope"],
    ["eval", "--gt", "x", "--pred", "y", "--perspective", "sideways"],
    ["bench", "--preset", "reinsertion", "--rates", "a,b"],
])
def test_usage_errors_exit_2(argv, capsys):
    assert main(argv) == 2
    assert capsys.readouterr().err


def test_config_error_exits_2(tmp_path, scene):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"features": ["BYTE", "CMC"]}))
    code = main(["track", "--dets", str(scene / "sim" / "detections.jsonl"), "--out", str(tmp_path / "o"),
                 "--config", str(cfg)])
    assert code == 2


def test_track_needs_an_output_directory(scene):
    assert main(["track", "--dets", str(scene / "sim" / "detections.jsonl")]) == 2


def test_bench_prints_the_api_table(capsys):
    assert main(["bench", "--preset", "reinsertion", "--rates", "5,25"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc == {"preset": "reinsertion", "perspective": "intraoperative",
                   "HOTA": bench_table("reinsertion", [5, 25])}


def test_consistency_matches_the_library(scene, capsys):
    path = scene / "sim" / "embeddings.jsonl"
    assert main(["consistency", "--embeddings", str(path), "--k", "1,start"]) == 0
    doc = json.loads(capsys.readouterr().out)
    series = formats.parse_embeddings(path)
    assert doc == {"1": consistency_accuracy(series, 1, 0.5), "start": consistency_accuracy(series, "start", 0.5)}
    assert main(["consistency", "--embeddings", str(path), "--k", "x"]) == 2


def test_module_entry_point_runs():
    proc = subprocess.run([sys.executable, "-m", "tooltrack", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "track" in proc.stdout
