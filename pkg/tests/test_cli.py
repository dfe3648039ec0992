import json

import pytest

from noonsim import cli
from noonsim import sweep as sweep_mod
from noonsim.dynamics import IntegrationError

CONFIG = """\
schema = 1
name = "cli"
method = "nojump"

[system]
scheme = "I"
n = 2
g = 1.0
detuning = 0.5

[sweep]
parameter = "kappa"
start = 0.0
stop = 0.5
points = 2

[time]
start = 0.0
stop = 2.0
points = 5

[initial]
photon_number = 1
left = ["s1"]
right = ["s2"]

[target]
photon_number = 1
left = ["a1", "a2"]
right = ["a3", "a4"]
"""


@pytest.fixture
def config(tmp_path):
    path = tmp_path / "run.toml"
    path.write_text(CONFIG)
    return path


def test_run_writes_csv(config, tmp_path, capsys):
    out = tmp_path / "out.csv"
    assert cli.main(["run", str(config), "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert "param_value,t,fidelity" in lines
    assert len([ln for ln in lines if not ln.startswith("#")]) == 1 + 2 * 5
    assert "max fidelity" in capsys.readouterr().err


def test_run_json_to_stdout(config, capsys):
    assert cli.main(["run", str(config), "--format", "json", "--method", "master"]) == 0
    data = json.loads(capsys.readouterr().out)
    assert data["manifest"]["spec"]["method"] == "master"
    assert len(data["fidelity"]) == 2


def test_bad_config_reports_paths(tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text(CONFIG.replace("points = 2", "points = 0").replace('scheme = "I"',
                                                                        'scheme = "I"\ncolour = 1'))
    assert cli.main(["run", str(bad)]) == 2
    err = capsys.readouterr().err
    assert "sweep.points" in err


def test_missing_file_is_config_error(tmp_path):
    assert cli.main(["run", str(tmp_path / "nope.toml")]) == 2


def test_numerical_failure_exit_code(config, monkeypatch, capsys):
    def boom(spec, row):
        raise IntegrationError("step size underflow")

    monkeypatch.setattr(sweep_mod, "compute_row", boom)
    assert cli.main(["run", str(config)]) == 3
    assert "underflow" in capsys.readouterr().err


def test_invalid_thread_env(config, monkeypatch, capsys):
    monkeypatch.setenv(cli.THREADS_ENV, "many")
    assert cli.main(["run", str(config)]) == 2
    assert cli.THREADS_ENV in capsys.readouterr().err


def test_preset_show_config(capsys):
    assert cli.main(["preset", "fig6b", "--show-config"]) == 0
    cfg = json.loads(capsys.readouterr().out)
    assert cfg["system"]["scheme"] == "II" and cfg["system"]["eta"] == 1.5


def test_dump_ops(config, tmp_path, capsys):
    basis = tmp_path / "basis.jsonl"
    amps = tmp_path / "amps.csv"
    assert cli.main(["dump-ops", str(config), "--value", "0.3", "--dump-basis", str(basis),
                     "--dump-amplitudes", str(amps)]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert {"config", "kappa", "labels", "h_nh", "jumps"} <= set(payload)
    assert payload["kappa"] == 0.3
    assert len(basis.read_text().splitlines()) == 6
    assert len(amps.read_text().splitlines()) == 6


def test_traj_with_events(config, tmp_path, capsys):
    events = tmp_path / "events.jsonl"
    assert cli.main(["traj", str(config), "--value", "0.5", "--n-traj", "50", "--dt", "0.01",
                     "--events", str(events)]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0] == "t,fidelity,stderr" and len(out) == 6
    for line in events.read_text().splitlines():
        ev = json.loads(line)
        assert ev["channel"] in ("J_o", "J_e") and 0 < ev["t"] <= 2.0
