import csv
import json

import pytest
import yaml

from quantpassive.cli import main
from quantpassive.exceptions import ScenarioError
from quantpassive.pipeline import run_and_check, simulate_scenario, sweep
from quantpassive.scenario import load_scenario, preset_path

RUN_FILES = {"trajectory.csv", "events.jsonl", "analysis.json", "manifest.json"}


def test_run_directory_layout(tmp_path):
    s = load_scenario("single_integrators_p3")
    manifest, report = run_and_check(s, tmp_path, "tag1")
    run_dir = tmp_path / "single_integrators_p3" / "tag1"
    assert {p.name for p in run_dir.iterdir()} == RUN_FILES
    assert manifest.ok and report["summary"] == {"passed": 6, "failed": 0}
    data = json.loads((run_dir / "manifest.json").read_text())
    assert data["scenario_sha256"] == s.sha256
    assert data["checks"] == {"passed": 6, "failed": 0}
    assert "PCG64" in data["prng"]["algorithm"]
    assert set(data["versions"]) >= {"quantpassive", "numpy", "scipy", "python"}
    assert set(data["files"].values()) == RUN_FILES


def test_csv_header_and_rows(tmp_path):
    s = load_scenario("double_integrators_tracking")
    run_and_check(s, tmp_path, "a")
    with open(tmp_path / s.name / "a" / "trajectory.csv") as fh:
        rows = list(csv.reader(fh))
    header = rows[0]
    assert header[:4] == ["t", "x[1.1]", "x[1.2]", "x[2.1]"]
    assert "xi[3.2]" in header and "u[1.1]" in header and header[-1] == "qz[2.2]"
    assert all(len(r) == len(header) for r in rows)
    events = (tmp_path / s.name / "a" / "events.jsonl").read_text().splitlines()
    first = json.loads(events[0])
    assert set(first) == {"t", "edge", "comp", "old", "new", "deferred"}
    assert first["edge"] >= 1 and first["comp"] >= 1


def test_simulate_only_skips_analysis(tmp_path):
    manifest, report = run_and_check(load_scenario("single_integrators_k2"), tmp_path, "s", analyze=False)
    assert report is None
    assert "analysis" not in manifest.files


@pytest.mark.parametrize("name", ["single_integrators_p3", "output_regulation_p3"])
def test_byte_identical_reruns(tmp_path, name):
    s = load_scenario(name)
    run_and_check(s, tmp_path, "a")
    run_and_check(load_scenario(name), tmp_path, "b")
    for f in ("trajectory.csv", "events.jsonl", "analysis.json"):
        assert (tmp_path / name / "a" / f).read_bytes() == (tmp_path / name / "b" / f).read_bytes()


def test_sweep_single_value_matches_run(tmp_path):
    s = load_scenario("consensus_p3")
    path, rows = sweep(s, "delta", [1.0], tmp_path, "sw", baseline=False)
    assert len(rows) == 1
    run_and_check(s, tmp_path, "direct")
    sweep_dir = tmp_path / "consensus_p3" / "sw" / "delta=1"
    for f in ("trajectory.csv", "events.jsonl", "analysis.json"):
        assert (sweep_dir / f).read_bytes() == (tmp_path / "consensus_p3" / "direct" / f).read_bytes()
    lines = path.read_text().splitlines()
    assert len(lines) == 2 and lines[0].startswith("parameter,value,delta,final_disagreement,trailing_disagreement")


def test_sweep_rejects_empty_and_unknown(tmp_path):
    s = load_scenario("consensus_p3")
    with pytest.raises(ScenarioError):
        sweep(s, "delta", [], tmp_path)
    with pytest.raises(ScenarioError):
        sweep(s, "horizon", [1.0], tmp_path)


def test_lambda_scale_sweep(tmp_path):
    raw = yaml.safe_load(preset_path("estimator_p3").read_text())
    raw["simulation"]["horizon"] = 20.0
    from quantpassive.scenario import build_scenario
    s = build_scenario(raw)
    _, rows = sweep(s, "lambda-scale", [0.5, 2.0], tmp_path, "ls")
    assert [r["value"] for r in rows] == ["0.5", "2"]


def test_unquantized_trajectory_has_no_events():
    traj = simulate_scenario(load_scenario("single_integrators_p3"), quantized=False)
    assert traj.events == [] and not traj.quantized


# ---------------------------------------------------------------- command line


def test_cli_check_passes(tmp_path, capsys):
    assert main(["check", "single_integrators_k2", "--out", str(tmp_path), "--tag", "x"]) == 0
    out = capsys.readouterr().out
    assert "PASS  practical_consensus" in out


def test_cli_quiet(tmp_path, capsys):
    assert main(["check", "single_integrators_k2", "--out", str(tmp_path), "--tag", "x", "--quiet"]) == 0
    assert capsys.readouterr().out == ""


def test_cli_check_fails_with_exit_one(tmp_path, capsys):
    raw = yaml.safe_load(preset_path("single_integrators_p3").read_text())
    raw["simulation"]["horizon"] = 0.2     # too short to settle
    raw["checks"]["window"] = 0.1
    path = tmp_path / "short.yaml"
    path.write_text(yaml.safe_dump(raw))
    assert main(["check", str(path), "--out", str(tmp_path), "--tag", "x"]) == 1
    assert "FAIL" in capsys.readouterr().out


def test_cli_analyze_and_simulate_exit_zero(tmp_path):
    raw = yaml.safe_load(preset_path("single_integrators_p3").read_text())
    raw["simulation"]["horizon"] = 0.2
    raw["checks"]["window"] = 0.1
    path = tmp_path / "short.yaml"
    path.write_text(yaml.safe_dump(raw))
    assert main(["analyze", str(path), "--out", str(tmp_path), "--tag", "a", "--quiet"]) == 0
    assert main(["simulate", str(path), "--out", str(tmp_path), "--tag", "s", "--quiet"]) == 0
    assert not (tmp_path / "single_integrators_p3" / "s" / "analysis.json").exists()


def test_cli_seed_and_tol_overrides(tmp_path):
    assert main(["check", "consensus_sync_a0", "--seed", "4", "--tol", "1e-5", "--out", str(tmp_path),
                 "--tag", "o", "--quiet"]) == 0
    analysis = json.loads((tmp_path / "consensus_sync_a0" / "o" / "analysis.json").read_text())
    manifest = json.loads((tmp_path / "consensus_sync_a0" / "o" / "manifest.json").read_text())
    assert manifest["prng"]["seed"] == 4
    assert analysis["checks"][0]["reports"][0]["tol"] == 1e-5


def test_cli_presets_list(capsys):
    assert main(["presets", "list"]) == 0
    assert "single_integrators_p3" in capsys.readouterr().out.split()


def test_cli_sweep_empty_values_is_usage_error(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["sweep", "consensus_p3", "--param", "delta", "--values"])
    assert exc.value.code == 2


def test_cli_sweep(tmp_path, capsys):
    assert main(["sweep", "consensus_p3", "--param", "delta", "--values", "1", "0.5", "--out", str(tmp_path),
                 "--tag", "w"]) == 0
    rows = list(csv.DictReader(open(tmp_path / "consensus_p3" / "w" / "summary.csv")))
    assert [r["value"] for r in rows] == ["1", "0.5", "baseline"]


def test_cli_bad_scenario_exit_two(tmp_path, capsys):
    assert main(["check", "no_such_preset", "--out", str(tmp_path)]) == 2
    assert "unknown preset" in capsys.readouterr().err
