import json

import numpy as np
import pytest

from coarselat import cli


def write_config(tmp_path, data, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return str(path)


def run_cli(tmp_path, command, data, out="out", extra=()):
    cfg = write_config(tmp_path, data)
    return cli.main([command, "--config", cfg, "--output", str(tmp_path / out), *extra])


def test_forward_periodic_vanishes_together(tmp_path):
    data = {"params": {"beta": -1.0}, "window_size": 12, "initial_data": {"kind": "periodic", "pattern": [2, 1]}, "t_end": 1.0}
    assert run_cli(tmp_path, "forward", data) == 0
    ev = np.loadtxt(tmp_path / "out" / "events.csv", delimiter=",", skiprows=1, usecols=(0, 1), ndmin=2)
    assert sorted(ev[:, 1].astype(int)) == list(range(1, 12, 2))
    assert np.ptp(ev[:, 0]) <= 1e-6
    man = json.loads((tmp_path / "out" / "manifest.json").read_text())
    assert man["exit_code"] == 0
    assert set(man["files"]) == {"trajectory.csv", "events.csv"}
    assert man["checks"]["mass_conservation"]["passed"]


def test_kernel_rows_sum_to_one(tmp_path):
    assert run_cli(tmp_path, "kernel", {"params": {"beta": 1.0}, "t_list": [0.5, 1, 5]}) == 0
    data = np.loadtxt(tmp_path / "out" / "kernel.csv", delimiter=",", skiprows=1)
    for t in (0.5, 1.0, 5.0):
        assert abs(data[data[:, 0] == t, 2].sum() - 1) <= 1e-9
    fits = json.loads((tmp_path / "out" / "fits.json").read_text())
    assert {f["kind"] for f in fits} == {"aronson", "nash"}


def test_runs_are_deterministic(tmp_path):
    data = {"params": {"beta": 0.5}, "window_size": 16, "initial_data": {"kind": "random", "seed": 5}, "t_end": 3.0}
    assert run_cli(tmp_path, "forward", data, "a") == 0
    assert run_cli(tmp_path, "forward", data, "b") == 0
    for name in ("trajectory.csv", "events.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert run_cli(tmp_path, "forward", data, "c", ["--seed", "6"]) == 0
    assert (tmp_path / "a" / "trajectory.csv").read_bytes() != (tmp_path / "c" / "trajectory.csv").read_bytes()


def test_backward_and_analyze(tmp_path):
    data = {"params": {"beta": 0.5}, "window_size": 16, "initial_data": {"kind": "periodic", "pattern": [1, 0]}, "t_end": 1.0, "samples": 10}
    assert run_cli(tmp_path, "backward", data, "b") == 0
    man = json.loads((tmp_path / "b" / "manifest.json").read_text())
    assert man["checks"]["comparison"]["passed"]
    assert run_cli(tmp_path, "analyze", {"params": {"beta": 0.5}, "input": str(tmp_path / "b")}, "an") == 0
    fits = json.loads((tmp_path / "an" / "fits.json").read_text())
    assert fits[0]["kind"] == "holder_time"


def test_sweep_over_n(tmp_path):
    data = {"base_command": "construct", "params": {"beta": 0.5}, "M0": 64, "sweep_axis": {"name": "n", "values": [0, 1, 2]}}
    assert run_cli(tmp_path, "sweep", data) == 0
    for n in (0, 1, 2):
        assert (tmp_path / "out" / f"n={n}" / "manifest.json").exists()
    rows = np.loadtxt(tmp_path / "out" / "n=0" / "trajectory.csv", delimiter=",", skiprows=1, ndmin=2)
    assert np.all(rows[:, 2] == 1.0)


def test_sweep_over_beta_gives_rate_fits(tmp_path):
    data = {
        "base_command": "construct", "params": {"beta": 0.5}, "n": 3, "M0": 128, "threads": 2,
        "sweep_axis": {"name": "beta", "values": [-1.0, 0.5]},
    }
    assert run_cli(tmp_path, "sweep", data) == 0
    summary = json.loads((tmp_path / "out" / "summary.json").read_text())
    for rec, target in zip(summary["runs"], (0.5, 2.0)):
        assert rec["exit_code"] == 0
        assert abs(rec["fits"][0]["exponent"] / target - 1) <= 0.15


@pytest.mark.parametrize(
    "command,data",
    [
        ("forward", {"params": {"beta": 0.0}}),
        ("forward", {"params": {"beta": 0.5}, "initial_data": {"kind": "random"}}),
        ("forward", {"params": {"beta": 0.5}, "initial_data": {"kind": "file", "path": "/nonexistent.json"}}),
        ("sweep", {"params": {"beta": 0.5}, "base_command": "forward", "sweep_axis": {"name": "beta", "values": []}}),
        ("analyze", {"params": {"beta": 0.5}}),
    ],
)
def test_config_errors_exit_2(tmp_path, command, data):
    assert run_cli(tmp_path, command, data) == 2


def test_numerical_failure_exit_3(tmp_path):
    data = {"params": {"beta": -1.0}, "window_size": 8, "initial_data": {"kind": "periodic", "pattern": [1, 0]}, "t_end": 1.0}
    assert run_cli(tmp_path, "backward", data) == 3


def test_invariant_failure_exit_4(tmp_path, monkeypatch):
    monkeypatch.setattr(cli, "_mass_check", lambda traj: {"passed": False, "value": 1.0})
    data = {"params": {"beta": 1.0}, "window_size": 8, "t_end": 0.5}
    assert run_cli(tmp_path, "forward", data) == 4
    assert json.loads((tmp_path / "out" / "manifest.json").read_text())["exit_code"] == 4


def test_file_initial_data(tmp_path):
    from coarselat.core import Configuration

    (tmp_path / "x.json").write_text(Configuration([1.0, 0.5, 0.75]).to_json())
    data = {"params": {"beta": 0.5}, "initial_data": {"kind": "file", "path": str(tmp_path / "x.json")}, "t_end": 0.5}
    assert run_cli(tmp_path, "forward", data) == 0
