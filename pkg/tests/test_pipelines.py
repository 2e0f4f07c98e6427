import json
import math

import numpy as np
import pandas as pd
import pytest

from gfkit.errors import ScenarioError
from gfkit.models.scenario import Scenario
from gfkit.pipelines.run import run_scenario
from gfkit.pipelines.sweep import RESULT_COLUMNS, parse_ranges, run_sweep, sweep_points

ARTIFACTS = [
    "validation.json",
    "perron.csv",
    "perron.svg",
    "perron_dt.csv",
    "trace.csv",
    "snapshots/index.csv",
    "distance.csv",
    "distance.svg",
    "diagnostics.json",
    "oracle.csv",
    "summary.json",
]


@pytest.fixture
def scenario_file(tmp_path, scenario_text):
    path = tmp_path / "quick.cfg"
    path.write_text(scenario_text, encoding="utf-8")
    return path


def _files(directory):
    return {path.relative_to(directory): path.read_bytes() for path in sorted(directory.rglob("*")) if path.is_file()}


def test_run_writes_every_artifact(scenario_file, tmp_path):
    out = tmp_path / "run"
    summary = run_scenario(Scenario.from_file(scenario_file), out)

    for name in ARTIFACTS:
        assert (out / name).is_file(), name

    data = json.loads((out / "summary.json").read_text(encoding="utf-8"))
    assert data["lambda"] == pytest.approx(1.0, abs=1e-2)
    assert data["scenario"] == "quick"
    assert data["mode"] == "standard"
    assert data["validation_passed"] is True
    assert data["cells"] == 128
    assert summary.conservation_drift <= 1e-6
    assert math.isfinite(summary.sandwich_C)
    assert data["lambda_positive"] is True
    assert data["phi_source"] == "step_calibrated"

    generator, stepped = pd.read_csv(out / "perron.csv"), pd.read_csv(out / "perron_dt.csv")
    np.testing.assert_allclose(stepped["x"], generator["x"])
    assert np.max(np.abs(stepped["phi"] - generator["phi"])) <= 0.1 * generator["phi"].max()
    assert data["lambda_dt"] == pytest.approx(data["lambda"], abs=1e-2)

    oracle = pd.read_csv(out / "oracle.csv")
    assert list(oracle["t"]) == [0.5, 1.0]
    assert {"pde_number", "pde_mass", "pde_bracket", "bracket_mean_rescaled"} <= set(oracle.columns)

    snapshots = pd.read_csv(out / "snapshots" / "index.csv")
    assert (out / "snapshots" / snapshots["file"].iloc[-1]).is_file()


def test_reruns_are_byte_identical(scenario_file, tmp_path):
    scenario = Scenario.from_file(scenario_file)
    run_scenario(scenario, tmp_path / "first")
    run_scenario(scenario, tmp_path / "second")

    assert _files(tmp_path / "first") == _files(tmp_path / "second")


def test_oracle_can_be_skipped(scenario_file, tmp_path):
    out = tmp_path / "run"
    run_scenario(Scenario.from_file(scenario_file), out, oracle=False)

    assert not (out / "oracle.csv").exists()


def test_parse_ranges_and_points():
    ranges = parse_ranges(["grid.n=64, 128", "evolution.dt=0.01,0.02"])

    assert ranges == {"grid.n": ["64", "128"], "evolution.dt": ["0.01", "0.02"]}
    assert sweep_points(ranges) == [
        {"grid.n": "64", "evolution.dt": "0.01"},
        {"grid.n": "64", "evolution.dt": "0.02"},
        {"grid.n": "128", "evolution.dt": "0.01"},
        {"grid.n": "128", "evolution.dt": "0.02"},
    ]


@pytest.mark.parametrize("param", ["grid.n", "n=1,2"])
def test_parse_ranges_rejects_malformed_parameters(param):
    with pytest.raises(ScenarioError):
        parse_ranges([param])


def test_empty_range_writes_the_header_only(scenario_file, tmp_path):
    frame = run_sweep(scenario_file, ["grid.n="], tmp_path / "sweep")

    assert frame.empty
    written = pd.read_csv(tmp_path / "sweep" / "sweep.csv")
    assert list(written.columns) == ["point", "grid.n", *RESULT_COLUMNS]
    assert written.empty


@pytest.mark.slow
def test_sweep_keeps_failed_points(scenario_file, tmp_path):
    frame = run_sweep(scenario_file, ["evolution.dt=0.01,1.0"], tmp_path / "sweep", jobs=2)

    assert list(frame["point"]) == [0, 1]
    assert list(frame["status"]) == ["ok", "failed"]
    assert frame["lambda"].iloc[0] == pytest.approx(1.0, abs=1e-2)
    assert "ValueError" in frame["error"].iloc[1]
    assert (tmp_path / "sweep" / "point_0000" / "summary.json").is_file()
