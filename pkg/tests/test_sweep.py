import json

import numpy as np
import pytest

from noonsim import sweep as sweep_mod
from noonsim.dynamics import IntegrationError
from noonsim.sweep import (
    PRESETS,
    ResultGrid,
    SpecError,
    SweepSpec,
    emit,
    find_max,
    parse_spec,
    preset,
    read_csv,
    run_sweep,
    to_csv,
    to_json,
)


def small_spec(**overrides):
    d = {
        "schema": 1,
        "name": "small",
        "system": {"scheme": "I", "n": 2, "g": 1.0, "detuning": 0.0},
        "sweep": {"parameter": "kappa", "start": 0.0, "stop": 1.0, "points": 2},
        "time": {"start": 0.0, "stop": 3.0, "points": 31},
        "initial": {"photon_number": 1, "left": ["s1"], "right": ["s2"]},
        "target": {"photon_number": 1, "left": ["a1", "a2"], "right": ["a3", "a4"]},
    }
    d.update(overrides)
    return parse_spec(d)


def test_closed_system_row_matches_rabi_formula():
    grid = run_sweep(small_spec())
    assert grid.fidelity.shape == (2, 31)
    # without leakage each emitter swaps into its two modes at sqrt(2) g
    np.testing.assert_allclose(grid.fidelity[0], np.sin(np.sqrt(2) * grid.times) ** 2, atol=1e-10)
    assert grid.fidelity[1].max() < grid.fidelity[0].max()


def test_single_point_axis():
    spec = small_spec(sweep={"parameter": "kappa", "start": 0.4, "stop": 0.4, "points": 1})
    grid = run_sweep(spec)
    assert grid.fidelity.shape == (1, 31)
    assert grid.param_values.tolist() == [0.4]


def test_find_max_tie_breaking_and_nan():
    grid = ResultGrid("kappa", np.arange(2.0), np.arange(3.0), np.full((2, 3), 0.5), [{}, {}])
    assert find_max(grid) == (0.5, (0, 0))
    grid.fidelity[1, 2] = np.nan
    grid.fidelity[1, 1] = 0.7
    assert find_max(grid) == (0.7, (1, 1))
    single = ResultGrid("kappa", np.zeros(1), np.zeros(1), np.array([[0.3]]), [{}])
    assert find_max(single) == (0.3, (0, 0))
    empty = ResultGrid("kappa", np.zeros(1), np.zeros(1), np.array([[np.nan]]), [{}])
    assert find_max(empty)[1] is None


def test_csv_json_consistency_and_determinism(tmp_path):
    spec = small_spec()
    grid = run_sweep(spec)
    emit(grid, tmp_path / "a.csv", "csv")
    emit(grid, tmp_path / "a.json", "json")
    manifest, rows = read_csv((tmp_path / "a.csv").read_text())
    back = ResultGrid.from_dict(json.loads((tmp_path / "a.json").read_text()))
    assert manifest == back.manifest == grid.manifest
    np.testing.assert_allclose(rows[:, 2], back.fidelity.reshape(-1), rtol=0, atol=1e-15)
    np.testing.assert_array_equal(rows[:, 0], np.repeat(grid.param_values, 31))
    assert to_csv(run_sweep(spec)) == (tmp_path / "a.csv").read_text()
    assert to_json(run_sweep(spec)) == (tmp_path / "a.json").read_text()


def test_csv_header_layout():
    text = to_csv(run_sweep(small_spec()))
    lines = text.splitlines()
    first_data = next(i for i, ln in enumerate(lines) if not ln.startswith("#"))
    assert lines[first_data] == "param_value,t,fidelity"
    assert all(ln.startswith("# ") for ln in lines[:first_data])


def test_manifest_reruns_to_identical_values():
    grid = run_sweep(small_spec(method="master"))
    again = run_sweep(SweepSpec.from_dict(grid.manifest["spec"]))
    np.testing.assert_array_equal(grid.fidelity, again.fidelity)


def test_threads_and_row_order_do_not_change_results():
    spec = small_spec(sweep={"parameter": "eta", "start": 0.0, "stop": 1.5, "points": 4})
    serial = run_sweep(spec)
    threaded = run_sweep(spec, threads=3)
    np.testing.assert_array_equal(serial.fidelity, threaded.fidelity)
    reversed_rows = run_sweep(spec, rows=[3, 2, 1, 0])
    np.testing.assert_array_equal(reversed_rows.fidelity[::-1], serial.fidelity)


def test_failed_row_is_recorded(monkeypatch):
    real = sweep_mod.compute_row

    def flaky(spec, row):
        if row == 1:
            raise IntegrationError("step size underflow")
        return real(spec, row)

    monkeypatch.setattr(sweep_mod, "compute_row", flaky)
    grid = run_sweep(small_spec(sweep={"parameter": "kappa", "start": 0, "stop": 1, "points": 3}))
    assert grid.failed_rows == [1]
    assert np.all(np.isnan(grid.fidelity[1]))
    assert np.all(np.isfinite(grid.fidelity[[0, 2]]))
    assert "underflow" in grid.cell_meta[1]["error"]
    assert json.loads(to_json(grid))["fidelity"][1][0] is None


def test_validation_lists_every_problem_with_paths():
    with pytest.raises(SpecError) as exc:
        parse_spec({
            "schema": 2,
            "method": "guess",
            "system": {"scheme": "I", "n": 2},
            "sweep": {"parameter": "xi", "start": 0, "stop": 1, "points": 0},
            "time": {"start": 0, "stop": -1, "points": 5},
            "initial": {"photon_number": 1, "left": ["s1"], "right": ["s7"]},
            "target": {"photon_number": 2, "left": ["a1"], "right": ["a2"]},
            "colour": "red",
        })
    paths = {p for p, _ in exc.value.errors}
    assert {"schema", "method", "sweep.parameter", "sweep.points", "time.stop",
            "initial", "target.photon_number", "colour"} <= paths


def test_bad_system_and_negative_rate_axis():
    with pytest.raises(SpecError) as exc:
        small_spec(system={"scheme": "I"})
    assert exc.value.errors[0][0] == "system"
    with pytest.raises(SpecError):
        small_spec(sweep={"parameter": "kappa", "start": -1.0, "stop": 1.0, "points": 3})


def test_toml_and_json_files(tmp_path):
    toml = tmp_path / "run.toml"
    toml.write_text(
        'schema = 1\nname = "t"\nmethod = "nojump"\n\n'
        '[system]\nscheme = "II"\nn = 1\ng = 1.0\nkappa = 0.2\n\n'
        '[sweep]\nparameter = "eta"\nstart = 0.0\nstop = 1.0\npoints = 2\n\n'
        '[time]\nstart = 0.0\nstop = 2.0\npoints = 5\n\n'
        '[initial]\nphoton_number = 1\nleft = ["s1"]\nright = ["s2"]\n\n'
        '[target]\nphoton_number = 1\nleft = ["a1", "a2"]\nright = ["a3", "a4"]\n'
    )
    spec = SweepSpec.from_file(toml)
    assert spec.system["scheme"] == "II" and spec.parameter.name == "eta"
    js = tmp_path / "run.json"
    js.write_text(json.dumps(spec.to_dict()))
    assert SweepSpec.from_file(js) == spec
    bad = tmp_path / "bad.toml"
    bad.write_text("schema = \n")
    with pytest.raises(SpecError):
        SweepSpec.from_file(bad)
    with pytest.raises(SpecError):
        SweepSpec.from_file(tmp_path / "missing.toml")


def test_trajectory_method_reports_standard_errors():
    spec = small_spec(method="trajectories", trajectories={"n_traj": 200, "dt": 0.01},
                      sweep={"parameter": "kappa", "start": 0.5, "stop": 0.5, "points": 1})
    grid = run_sweep(spec)
    exact = run_sweep(small_spec(sweep={"parameter": "kappa", "start": 0.5, "stop": 0.5,
                                        "points": 1}))
    assert grid.stderr is not None
    # before any click the sample error is zero; allow for an unseen jumped
    # fraction below 3 / n_traj
    assert np.all(np.abs(grid.fidelity - exact.fidelity) <= 4 * grid.stderr + 3 / 200)
    assert "stderr" in to_csv(grid).splitlines()[-(31 * 1) - 1]


def test_scaled_spec_is_invariant():
    spec = small_spec(sweep={"parameter": "kappa", "start": 0.1, "stop": 0.9, "points": 3},
                      system={"scheme": "I", "n": 2, "g": 1.0, "detuning": 0.5, "eta": 0.3})
    a = run_sweep(spec)
    b = run_sweep(spec.scaled(3.7))
    np.testing.assert_allclose(b.fidelity, a.fidelity, atol=1e-10)
    np.testing.assert_allclose(b.times * 3.7, a.times)


def test_presets_parse_and_echo():
    assert len(PRESETS) == 12
    for name in PRESETS:
        spec = preset(name)
        assert spec.name == name
        assert parse_spec(spec.to_dict()) == spec
    with pytest.raises(SpecError):
        preset("fig7z")
