import csv
import json
import subprocess
import sys

import pytest

from conftest import displacements_from, orbit
from wristservo.annotation import AnnotationInput
from wristservo.cli import main
from wristservo.vision import CameraIntrinsics

EVENTS = "".join(json.dumps(e) + "\n" for e in [
    {"t": 0, "event": "ArmRaised"}, {"t": 20, "event": "EmgRotationTrigger"},
    {"t": 22, "event": "EmgClose"}, {"t": 24, "event": "EmgOpen"}, {"t": 25, "event": "ArmLowered"},
])


def files(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir())}


def test_bench_compare_csv(tmp_path, capsys):
    assert main(["--seed", "5", "--out", str(tmp_path), "--workers", "1", "bench", "compare", "--n", "2"]) == 0
    rows = list(csv.DictReader((tmp_path / "comparison.csv").open()))
    assert len(rows) == 4 and {r["controller"] for r in rows} == {"s-IBVS", "pp-IBVS"}
    assert "natural" in (tmp_path / "summary.txt").read_text()
    assert "reference" in capsys.readouterr().out


def test_bench_compare_json_to_stdout(capsys):
    main(["--seed", "5", "--format", "json", "--workers", "1", "bench", "compare", "--n", "1"])
    doc = json.loads(capsys.readouterr().out)
    assert doc["n_points"] == 1 and doc["seed"] == 5


def test_bench_fig3(tmp_path):
    main(["--out", str(tmp_path), "bench", "fig3"])
    rows = list(csv.DictReader((tmp_path / "fig3.csv").open()))
    assert len(rows) == 4
    pp = {r["first_wps_sign"] for r in rows if r["controller"] == "pp-IBVS"}
    assert len(pp) == 1
    assert len(list(tmp_path.glob("trace_*.csv"))) == 4


def test_sim_episode(tmp_path):
    main(["--out", str(tmp_path), "--format", "json", "sim", "episode", "--controller", "s-IBVS"])
    doc = json.loads((tmp_path / "episode.json").read_text())
    assert doc["controller"] == "s-IBVS" and doc["trajectory"]
    main(["--out", str(tmp_path), "sim", "episode", "--wfe", "0", "--wps", "0"])
    head = (tmp_path / "trace.csv").read_text().splitlines()[0]
    assert head == "iteration,q_wfe,q_wps,x,y,error_norm"


def test_sim_session(tmp_path):
    log = tmp_path / "events.jsonl"
    log.write_text(EVENTS)
    out = tmp_path / "out"
    main(["--events", str(log), "--out", str(out), "sim", "session"])
    recs = [json.loads(line) for line in (out / "commands.jsonl").read_text().splitlines()]
    assert recs[-1]["phase"] == "Idle"
    assert any(r["command"] == "rotation_velocity" for r in recs)


def test_sim_session_requires_events():
    with pytest.raises(SystemExit):
        main(["sim", "session"])


def test_gen_object_and_annotate(tmp_path, capsys):
    main(["--out", str(tmp_path), "gen-object", "--kind", "bottle"])
    truth = orbit(6)
    intr = CameraIntrinsics().scaled(160, 120)
    inp = AnnotationInput(truth[0], displacements_from(truth), intr, None, (3,))
    (tmp_path / "input.json").write_text(json.dumps(inp.to_dict()))
    ann = tmp_path / "ann"
    main(["--out", str(ann), "annotate", "--input", str(tmp_path / "input.json"),
          "--object", str(tmp_path / "bottle.json")])
    manifest = json.loads((ann / "manifest.json").read_text())
    assert manifest["frames"] == [1, 2, 4, 5, 6] and manifest["gaps"] == [3]
    assert "chain gaps" in capsys.readouterr().out


def test_gen_viewpoints(tmp_path):
    main(["--seed", "3", "--out", str(tmp_path), "gen-viewpoints", "--bins", "2", "--per-bin", "3"])
    rows = list(csv.DictReader((tmp_path / "viewpoints.csv").open()))
    assert [r["bin"] for r in rows] == ["0"] * 3 + ["1"] * 3


def test_config_file(tmp_path):
    cfg = tmp_path / "run.toml"
    cfg.write_text('[controller]\nlambda = 1.2\n[sampler]\nrotation_range = [0, 10]\n')
    main(["--config", str(cfg), "--out", str(tmp_path), "--format", "json", "--workers", "1",
          "bench", "compare", "--n", "1"])
    doc = json.loads((tmp_path / "comparison.json").read_text())
    assert doc["config"]["controller"]["lam"] == 1.2
    assert doc["config"]["sampler"]["rotation_range"][1] == pytest.approx(0.17453292519943295)


@pytest.mark.parametrize("argv", [
    ["bench", "compare", "--n", "2"],
    ["bench", "fig3"],
    ["sim", "episode"],
    ["gen-viewpoints", "--bins", "2", "--per-bin", "4"],
])
def test_outputs_byte_identical(tmp_path, argv):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        main(["--seed", "9", "--workers", "1", "--out", str(d), *argv])
    assert files(a) == files(b)


def test_console_entry_point_runs():
    proc = subprocess.run([sys.executable, "-m", "wristservo.cli", "gen-object", "--kind", "ball"],
                          capture_output=True, text=True, check=True)
    assert json.loads(proc.stdout)["parts"][0]["label"] == "NoGrasp"
