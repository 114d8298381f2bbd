import json
import subprocess
import sys

import pytest

from searchtta.cli import main


def write_json(path, doc):
    path.write_text(json.dumps(doc), encoding="utf-8")
    return path


@pytest.fixture
def scenarios(tmp_path):
    params = write_json(tmp_path / "params.json", {"n": 10, "corruption": "mode_swap", "seed": 4})
    assert main(["gen-scenarios", "--params", str(params), "--count", "2", "--out", str(tmp_path / "gen")]) == 0
    return tmp_path / "gen"


def test_gen_scenarios_writes_files(scenarios):
    names = sorted(p.name for p in scenarios.iterdir())
    assert "scenario_00004_world.json" in names and "scenario_00005_episode.json" in names
    assert len(names) == 10


def test_run_episode_from_generated_files(scenarios, tmp_path, capsys):
    cfg = scenarios / "scenario_00004_episode.json"
    assert main(["run-episode", "--config", str(cfg), "--out", str(tmp_path / "ep")]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["id"] == "scenario_00004"
    assert (tmp_path / "ep" / "final_map.csv").exists()
    row = json.loads((tmp_path / "ep" / "episode.json").read_text())
    assert row["budget"] == 256


def test_inspect_map(scenarios, capsys):
    code = main(
        ["inspect-map", "--map", str(scenarios / "scenario_00004_base.csv"), "--world", str(scenarios / "scenario_00004_world.json")]
    )
    assert code == 0
    out = capsys.readouterr().out
    assert "quality" in out and "rmse_vs_ground_truth" in out


def test_run_suite(tmp_path, capsys):
    suite = write_json(
        tmp_path / "suite.json",
        {"templates": [{"name": "s", "scenario": {"n": 8}, "budget": 20}], "seeds": [0, 2]},
    )
    assert main(["run-suite", "--suite", str(suite), "--out", str(tmp_path / "out")]) == 0
    assert len((tmp_path / "out" / "episodes.jsonl").read_text().splitlines()) == 4
    assert "sign test" in capsys.readouterr().out


@pytest.mark.parametrize(
    "doc",
    [
        {"scenario": {"n": 8}, "planner": {"kind": "random"}},
        {"scenario": {"n": 8, "corruption": "fog"}},
        {"world": "missing.json", "base_map": "missing.csv"},
        {"scenario": {"n": 8}, "unknown": 1},
    ],
)
def test_config_errors_exit_2(tmp_path, doc):
    cfg = write_json(tmp_path / "ep.json", doc)
    assert main(["run-episode", "--config", str(cfg)]) == 2


def test_bad_json_and_missing_args_exit_2(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json", encoding="utf-8")
    assert main(["run-episode", "--config", str(bad)]) == 2
    assert main(["run-episode"]) == 2
    assert main(["gen-scenarios", "--params", str(write_json(tmp_path / "p.json", {})), "--count", "0", "--out", str(tmp_path)]) == 2


def test_runtime_error_exit_3(tmp_path):
    # valid config, but the output directory sits under a regular file
    suite = write_json(
        tmp_path / "suite.json",
        {"templates": [{"name": "x", "scenario": {"n": 8}}], "seeds": [0, 1]},
    )
    out_file = tmp_path / "blocked"
    out_file.write_text("not a directory", encoding="utf-8")
    assert main(["run-suite", "--suite", str(suite), "--out", str(out_file / "sub")]) == 3


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "searchtta", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "run-suite" in proc.stdout
