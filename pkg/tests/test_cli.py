import csv
import json

import numpy as np
import pytest

from hydrosched.cli import SweepSpec, main, parse_args
from hydrosched.model import ScenarioError, save_scenario, throughput
from hydrosched.report import read_schedule

from .conftest import golden, two_epoch


@pytest.fixture
def golden_file(tmp_path):
    path = tmp_path / "golden.json"
    save_scenario(golden(), path)
    return path


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_solve_writes_artifacts(tmp_path, golden_file, capsys):
    out = tmp_path / "run"
    code, stdout, _ = run(["solve", golden_file, "--certify", "--render", "--out", out], capsys)
    assert code == 0
    assert json.loads(stdout)["throughput_nats"] == pytest.approx(5.5528, abs=1e-3)
    with open(out / "schedule.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["epoch", "t_start", "t_end", "length", "p_sc", "p_b", "delta", "water_level"]
    first = [float(x) for x in rows[1][:7]]
    second = [float(x) for x in rows[2][:7]]
    assert first == pytest.approx([1, 0, 1, 1, 2.0202, 0, 7.9798], abs=1e-4)
    assert second == pytest.approx([2, 1, 11, 10, 1, 0.71818, 0], abs=1e-5)
    report = json.loads((out / "report.json").read_text())
    assert report["oracle_gap"] <= 1e-6
    assert report["kkt_residuals"]["verdict"] == "PASS"
    assert set(report["lemma_audit"].values()) == {"PASS"}
    assert report["log_base"] == "e"
    svg = (out / "water_levels.svg").read_text()
    assert svg.startswith("<svg") and "stroke-dasharray" in svg


def test_schedule_round_trip(tmp_path, capsys):
    path = tmp_path / "s.json"
    save_scenario(two_epoch(), path)
    run(["solve", path, "--out", tmp_path], capsys)
    policy, lengths = read_schedule(tmp_path / "schedule.csv")
    report = json.loads((tmp_path / "report.json").read_text())
    assert throughput(policy, lengths) == pytest.approx(report["throughput_nats"], abs=1e-9)


def test_zero_energy_scenario(tmp_path, capsys):
    path = tmp_path / "z.json"
    path.write_text(json.dumps(
        {"deadline": 2, "e_max": 1, "eta": 0.5, "initial_sc": 0, "initial_b": 0, "arrivals": [{"t": 1, "E": 0}]}
    ))
    code, stdout, _ = run(["solve", path, "--out", tmp_path], capsys)
    assert code == 0
    assert json.loads(stdout)["throughput_nats"] == 0.0
    policy, _ = read_schedule(tmp_path / "schedule.csv")
    assert not np.any(policy.p_sc) and not np.any(policy.p_b)


def test_missing_field_exit_one(tmp_path, capsys):
    data = golden().to_dict()
    del data["eta"]
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(data))
    code, _, err = run(["solve", path, "--out", tmp_path], capsys)
    assert code == 1
    payload = json.loads(err.strip().splitlines()[-1])
    assert payload["error"] == "invalid_input" and payload["field"] == "eta"


def test_unreadable_json_exit_one(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text("[1, 2")
    assert run(["audit", path], capsys)[0] == 1


def test_compare_passes(golden_file, capsys):
    code, stdout, _ = run(["compare", golden_file], capsys)
    doc = json.loads(stdout)
    assert code == 0 and doc["verdict"] == "PASS"
    assert doc["relative_gap"]["staged-barrier"] <= 1e-6
    assert doc["relative_gap"]["staged-grid"] <= 1e-3


def test_compare_single_epoch(tmp_path, capsys):
    path = tmp_path / "one.json"
    path.write_text(json.dumps(
        {"deadline": 1, "e_max": 2, "eta": 0.5, "initial_sc": 2, "initial_b": 1, "arrivals": []}
    ))
    doc = json.loads(run(["compare", path], capsys)[1])
    values = list(doc["throughput_nats"].values())
    assert len(values) == 3 and np.ptp(values) < 1e-6


def test_oracle_command(golden_file, capsys):
    code, stdout, _ = run(["oracle", golden_file, "--grid"], capsys)
    doc = json.loads(stdout)
    assert code == 0
    assert doc["kkt_residuals"]["verdict"] == "PASS"
    assert doc["grid_throughput_nats"] == pytest.approx(doc["throughput_nats"], rel=1e-3)


def test_sweep_eta(tmp_path, golden_file, capsys):
    code, stdout, _ = run(
        ["sweep", golden_file, "--param", "eta", "--from", 0, "--to", 0.9, "--step", 0.3, "--out", tmp_path], capsys
    )
    doc = json.loads(stdout)
    assert code == 0 and doc["monotone"]
    tp = [r["throughput"] for r in doc["rows"]]
    assert [r["value"] for r in doc["rows"]] == [0.0, 0.3, 0.6, 0.9]
    assert tp[-1] == pytest.approx(5.5528, abs=1e-3)
    assert (tmp_path / "sweep_eta.csv").exists()


def test_sweep_eta_flat_without_battery(tmp_path, capsys):
    path = tmp_path / "s.json"
    path.write_text(json.dumps(
        {"deadline": 3, "e_max": 5, "eta": 0.5, "initial_sc": 1, "initial_b": 0,
         "arrivals": [{"t": 1, "E": 4}, {"t": 2, "E": 0.5}]}
    ))
    doc = json.loads(run(["sweep", path, "--param", "eta", "--from", 0, "--to", 0.9, "--step", 0.15], capsys)[1])
    tp = [r["throughput"] for r in doc["rows"]]
    assert np.ptp(tp) < 1e-12


def test_sweep_capacity_plateaus(tmp_path, capsys):
    path = tmp_path / "s.json"
    path.write_text(json.dumps(
        {"deadline": 3, "e_max": 1, "eta": 0.5, "initial_sc": 1, "initial_b": 0,
         "arrivals": [{"t": 1, "E": 6}, {"t": 2, "E": 0}]}
    ))
    doc = json.loads(run(["sweep", path, "--param", "e_max", "--from", 1, "--to", 8, "--step", 1], capsys)[1])
    tp = [r["throughput"] for r in doc["rows"]]
    assert doc["monotone"]
    # once 7 J fit in the SC the optimum is the uncapped one: 7 J over 3 s, first epoch capped at 1 J
    uncapped = 0.5 * np.log(2) + 0.5 * 2 * np.log(1 + 3)
    assert tp[-1] == pytest.approx(uncapped, rel=1e-9)
    assert tp[-2] == pytest.approx(uncapped, rel=1e-9)


def test_sweep_rejects_eta_one(golden_file, capsys):
    code, _, err = run(["sweep", golden_file, "--param", "eta", "--from", 0.5, "--to", 1.0, "--step", 0.25], capsys)
    assert code == 1
    assert json.loads(err)["field"] == "eta"


def test_sweep_spec_values():
    assert SweepSpec("eta", 0.0, 0.9, 0.3).values().tolist() == [0.0, 0.3, 0.6, 0.9]
    with pytest.raises(ScenarioError):
        SweepSpec("eta", 0.0, 0.9, 0.0).values()


def test_audit(golden_file, capsys):
    code, stdout, _ = run(["audit", golden_file], capsys)
    doc = json.loads(stdout)
    assert code == 0 and doc["feasible"] and doc["kkt"]["verdict"] == "PASS"


def test_parse_args_seed(monkeypatch, golden_file):
    monkeypatch.setenv("HYDROSCHED_SEED", "7")
    assert parse_args(["audit", str(golden_file)]).seed == 7
