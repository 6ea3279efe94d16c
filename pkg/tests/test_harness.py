import json
import os
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from quadtrack import formats
from quadtrack.bench import association_timing, matching_scaling, pipeline_timing
from quadtrack.cli import EXIT_CHECK, EXIT_DATA, EXIT_OK, EXIT_USAGE, main
from quadtrack.config import RunConfig, format_config, load_config, parse_config
from quadtrack.errors import DataError, UsageError
from quadtrack.geometry import Quad
from quadtrack.pipeline import thread_count
from quadtrack.synthlab import ScenarioConfig, generate_sequence, write_sequence


def files_of(d: Path) -> dict:
    return {p.name: p.read_bytes() for p in sorted(d.iterdir()) if p.is_file()}


@pytest.fixture(scope="module")
def seq_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("seq")
    seq = generate_sequence(ScenarioConfig(frames=8, instances=3, seed=7, speed=(1, 3)))
    write_sequence(seq, d)
    return d


# ---- config ----------------------------------------------------------------------------


def test_default_config_round_trip():
    text = format_config()
    assert parse_config(text) == RunConfig()
    assert "[tracker]" in text and "matching = agd-agd" in text


@given(st.floats(0.0, 0.5), st.floats(0.5, 1.0), st.floats(0.01, 5), st.integers(1, 50),
       st.sampled_from(["appearance", "geometry", "agd"]), st.booleans())
def test_config_round_trip(tl, th, tm, k, desc, lstm):
    cfg = RunConfig(theta_l=tl, theta_h=th, theta_m=tm, top_k=k, descriptor=desc, use_convlstm=lstm)
    assert parse_config(format_config(cfg)) == cfg


@pytest.mark.parametrize("text", ["[tracker]\ntheta_q = 1\n", "[extras]\na = 1\n", "[tracker]\ntop_k = ten\n",
                                  "[tracker]\ntheta_l = 0.9\ntheta_h = 0.5\n", "[descriptor]\nmatching = iou\n",
                                  "theta_l = 0.3\n", "[descriptor]\nuse_convlstm = maybe\n"])
def test_bad_config(text):
    with pytest.raises(UsageError):
        parse_config(text)


def test_config_paths_checked(tmp_path):
    p = tmp_path / "run.ini"
    p.write_text("[model]\ngru_params = missing_dir\n")
    with pytest.raises(UsageError):
        load_config(p)
    (tmp_path / "missing_dir").mkdir()
    assert load_config(p).resolve("gru_params") == tmp_path / "missing_dir"


def test_print_config(capsys, tmp_path):
    assert main(["--print-config"]) == EXIT_OK
    assert parse_config(capsys.readouterr().out) == RunConfig()
    p = tmp_path / "c.ini"
    p.write_text("[tracker]\ntau = 0.2\n")
    assert main(["--print-config", "--config", str(p)]) == EXIT_OK
    assert parse_config(capsys.readouterr().out).tau == 0.2


# ---- formats ---------------------------------------------------------------------------


def test_records_round_trip(tmp_path, rng):
    q = Quad(rng.uniform(0, 100, (4, 2)) + np.array([[0, 0], [50, 0], [50, 50], [0, 50]]), 0.123456789)
    traj = [formats.trajectory_record(3, 7, q, 0.987654321)]
    formats.write_jsonl(tmp_path / "t.jsonl", traj)
    assert formats.read_trajectories(tmp_path / "t.jsonl") == traj
    formats.write_jsonl(tmp_path / "d.jsonl", [formats.detection_record(0, q)])
    back = formats.read_detections(tmp_path / "d.jsonl")[0][0]
    assert back == q
    formats.write_jsonl(tmp_path / "g.jsonl", [formats.gt_record(0, 1, q), formats.gt_record(1, 1, q)])
    (g,) = formats.read_gt(tmp_path / "g.jsonl")
    assert g.id == 1 and g.quads[1] == q.with_score(None)
    recs = [formats.FrameRecord(0, "a.qtns"), formats.FrameRecord(1, None, "m.qtns")]
    formats.write_manifest(tmp_path / "m.jsonl", recs)
    assert [(r.frame, Path(r.features).name if r.features else None) for r in
            formats.read_manifest(tmp_path / "m.jsonl")] == [(0, "a.qtns"), (1, None)]


def test_manifest_gap_lists_missing(tmp_path):
    formats.write_jsonl(tmp_path / "m.jsonl", [{"frame": 0}, {"frame": 3}])
    with pytest.raises(DataError, match="missing 1, 2"):
        formats.read_manifest(tmp_path / "m.jsonl")


@pytest.mark.parametrize("line,match", [("{bad json", ":1: invalid JSON"), ('{"frame": 0}', "missing field 'quad'"),
                                        ('{"frame": 0, "quad": [1, 2]}', "8 numbers"),
                                        ('{"frame": "x", "quad": [0,0,1,0,1,1,0,1]}', "integer")])
def test_malformed_records(tmp_path, line, match):
    p = tmp_path / "d.jsonl"
    p.write_text(line + "\n")
    with pytest.raises(DataError, match=match):
        formats.read_detections(p)


def test_gt_id_collision(tmp_path):
    q = Quad.box(0, 0, 10, 10)
    formats.write_jsonl(tmp_path / "g.jsonl", [formats.gt_record(0, 1, q), formats.gt_record(0, 1, q)])
    with pytest.raises(DataError, match="collision"):
        formats.read_gt(tmp_path / "g.jsonl")
    assert main(["eval-mot", "--gt", str(tmp_path / "g.jsonl"), "--hyp", str(tmp_path / "g.jsonl")]) == EXIT_DATA


# ---- track -----------------------------------------------------------------------------


def test_track_single_instance(tmp_path):
    write_sequence(generate_sequence(ScenarioConfig(frames=6, instances=1, motion="static", seed=3)), tmp_path)
    out = tmp_path / "out"
    assert main(["track", "--manifest", str(tmp_path / "manifest.jsonl"), "--out", str(out),
                 "--dump-descriptors"]) == EXIT_OK
    traj = formats.read_trajectories(out / "trajectories.jsonl")
    assert {r["track_id"] for r in traj} == {1}
    assert [r["frame"] for r in traj] == list(range(6))
    desc = [json.loads(l) for l in (out / "descriptors.jsonl").read_text().splitlines()]
    assert desc and all(len(d["agd"]) == 136 for d in desc)


def test_track_empty_manifest(tmp_path):
    (tmp_path / "m.jsonl").write_text("")
    out = tmp_path / "out"
    assert main(["track", "--manifest", str(tmp_path / "m.jsonl"), "--out", str(out)]) == EXIT_OK
    assert (out / "trajectories.jsonl").read_text() == ""
    assert (out / "detections.jsonl").read_text() == ""


def test_track_deterministic_across_threads(seq_dir, tmp_path, monkeypatch):
    runs = []
    for k, threads in enumerate(["1", "3", None]):
        argv = ["track", "--manifest", str(seq_dir / "manifest.jsonl"), "--out", str(tmp_path / f"o{k}"),
                "--dump-descriptors"]
        if threads:
            argv += ["--threads", threads]
        else:
            monkeypatch.setenv("QUADTRACK_THREADS", "2")
        assert main(argv) == EXIT_OK
        runs.append(files_of(tmp_path / f"o{k}"))
    assert runs[0] == runs[1] == runs[2]
    assert len(runs[0]) == 3


def test_track_eagd_and_convlstm_modes(seq_dir, tmp_path):
    cfg = tmp_path / "c.ini"
    cfg.write_text("[descriptor]\nmatching = eagd-agd\nuse_convlstm = true\n")
    assert main(["track", "--config", str(cfg), "--manifest", str(seq_dir / "manifest.jsonl"),
                 "--out", str(tmp_path / "o")]) == EXIT_OK
    assert formats.read_trajectories(tmp_path / "o" / "trajectories.jsonl")


def test_track_data_errors(seq_dir, tmp_path):
    formats.write_jsonl(tmp_path / "gap.jsonl", [{"frame": 0, "maps": str(seq_dir / "maps/00000.qtns")},
                                                 {"frame": 2, "maps": str(seq_dir / "maps/00002.qtns")}])
    assert main(["track", "--manifest", str(tmp_path / "gap.jsonl"), "--out", str(tmp_path / "o")]) == EXIT_DATA
    raw = (seq_dir / "features/00000.qtns").read_bytes()
    (tmp_path / "cut.qtns").write_bytes(raw[:len(raw) // 2])
    formats.write_jsonl(tmp_path / "cut.jsonl", [{"frame": 0, "features": "cut.qtns",
                                                  "maps": str(seq_dir / "maps/00000.qtns")}])
    assert main(["track", "--manifest", str(tmp_path / "cut.jsonl"), "--out", str(tmp_path / "o")]) == EXIT_DATA


def test_usage_errors(capsys):
    assert main([]) == EXIT_USAGE
    with pytest.raises(SystemExit) as e:
        main(["track"])
    assert e.value.code == EXIT_USAGE
    with pytest.raises(SystemExit) as e:
        main(["frobnicate"])
    assert e.value.code == EXIT_USAGE
    assert main(["track", "--manifest", "x", "--out", "y", "--config", "/nonexistent.ini"]) == EXIT_USAGE


def test_thread_count_env(monkeypatch):
    monkeypatch.setenv("QUADTRACK_THREADS", "4")
    assert thread_count() == 4
    monkeypatch.setenv("QUADTRACK_THREADS", "zero")
    with pytest.raises(UsageError):
        thread_count()


# ---- eval ------------------------------------------------------------------------------


def write_scripted(tmp_path):
    def sq(x, y):
        return Quad.box(x, y, x + 10, y + 10)
    gt, hyp = [], []
    for f in range(5):
        for gid, y in ((1, 0), (2, 100)):
            gt.append(formats.gt_record(f, gid, sq(10 * f, y)))
            tid = 3 if (gid == 1 and f >= 2) else gid
            if not (gid == 2 and f == 4):
                hyp.append(formats.trajectory_record(f, tid, sq(10 * f, y), 0.9))
    hyp.append(formats.trajectory_record(1, 9, sq(300, 300), 0.9))
    formats.write_jsonl(tmp_path / "gt.jsonl", gt)
    formats.write_jsonl(tmp_path / "hyp.jsonl", hyp)


def test_eval_mot_scripted(tmp_path, capsys):
    write_scripted(tmp_path)
    assert main(["eval-mot", "--gt", str(tmp_path / "gt.jsonl"), "--hyp", str(tmp_path / "hyp.jsonl"),
                 "--out", str(tmp_path / "r.json")]) == EXIT_OK
    assert "MOTA 70.00" in capsys.readouterr().out
    rep = json.loads((tmp_path / "r.json").read_text())
    assert rep["mota"] == 70.0 and (rep["idsw"], rep["fp"], rep["fn"]) == (1, 1, 1)


def test_eval_det(tmp_path, capsys):
    write_scripted(tmp_path)
    assert main(["eval-det", "--gt", str(tmp_path / "gt.jsonl"), "--hyp", str(tmp_path / "gt.jsonl"),
                 "--out", str(tmp_path / "r.json")]) == EXIT_OK
    assert json.loads((tmp_path / "r.json").read_text())["f_measure"] == 1.0
    far = [formats.detection_record(f, Quad.box(900, 900, 950, 950, 0.9)) for f in range(5)]
    formats.write_jsonl(tmp_path / "far.jsonl", far)
    assert main(["eval-det", "--gt", str(tmp_path / "gt.jsonl"), "--hyp", str(tmp_path / "far.jsonl"),
                 "--out", str(tmp_path / "r2.json")]) == EXIT_OK
    assert json.loads((tmp_path / "r2.json").read_text())["f_measure"] == 0.0


# ---- gradcheck -------------------------------------------------------------------------


def test_gradcheck_passes_and_repeats(tmp_path):
    assert main(["gradcheck", "--instances", "2", "--out", str(tmp_path / "a.txt")]) == EXIT_OK
    assert main(["gradcheck", "--instances", "2", "--out", str(tmp_path / "b.txt")]) == EXIT_OK
    a = (tmp_path / "a.txt").read_text()
    assert a == (tmp_path / "b.txt").read_text() and "FAIL" not in a


def test_gradcheck_negative_control(capsys):
    assert main(["gradcheck", "--instances", "1", "--perturb", "0.01"]) == EXIT_CHECK
    assert "FAIL" in capsys.readouterr().out


# ---- synth / train ---------------------------------------------------------------------


def test_synth_deterministic(tmp_path):
    for k in range(2):
        assert main(["synth", "--out", str(tmp_path / f"s{k}"), "--frames", "3", "--motion", "crossing",
                     "--size", "256"]) == EXIT_OK
    a, b = tmp_path / "s0", tmp_path / "s1"
    assert files_of(a) == files_of(b)
    assert files_of(a / "features") == files_of(b / "features")


def test_train_small(tmp_path):
    assert main(["train", "--out", str(tmp_path), "--steps", "3"]) == EXIT_OK
    rep = json.loads((tmp_path / "report.json").read_text())
    assert rep["steps_run"] == 3 and (tmp_path / "gru").is_dir() and (tmp_path / "embed").is_dir()
    cfg = tmp_path / "c.ini"
    cfg.write_text(f"[descriptor]\nmatching = eagd-agd\n[model]\ngru_params = gru\nembed_params = embed\n")
    assert load_config(cfg).resolve("gru_params") == tmp_path / "gru"


def test_train_divergence_exit_code(tmp_path):
    assert main(["train", "--out", str(tmp_path), "--steps", "200", "--lr", "1e6"]) == EXIT_CHECK


# ---- bench -----------------------------------------------------------------------------


def test_stage_times_account_for_wall_time(seq_dir):
    recs = formats.read_manifest(seq_dir / "manifest.jsonl")
    pipeline_timing(RunConfig(), recs, 1)  # warm caches
    rep = pipeline_timing(RunConfig(), recs, 1)
    assert rep["total_ms"] == pytest.approx(sum(rep["stage_ms"].values()))
    per_frame_wall = 1000.0 * rep["wall_s"] / rep["frames"]
    assert abs(per_frame_wall - rep["total_ms"]) <= 0.05 * per_frame_wall


def test_matching_time_grows_with_k():
    rows = matching_scaling((2, 10, 40), frames=60)
    ms = [r["median_ms"] for r in rows]
    assert ms[0] < ms[1] < ms[2]


def test_association_timing_fields():
    r = association_timing(k=4, frames=10, warmup=2)
    assert r["k"] == 4 and r["dim"] == 136 and r["median_ms"] > 0


def test_console_script_installed(tmp_path):
    exe = Path(sys.executable).with_name("quadtrack")
    cmd = [str(exe)] if exe.exists() else [sys.executable, "-m", "quadtrack.cli"]
    r = subprocess.run(cmd + ["--print-config"], capture_output=True, text=True, env={**os.environ})
    assert r.returncode == 0 and "[tracker]" in r.stdout
