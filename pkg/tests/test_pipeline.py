"""
Tests for the manifest dispatcher and its on-disk layout
"""

import json
import math

import pandas as pd
import pytest

import config
from models import PipelineCommand, RunManifest
from services.frame_io import list_patterns, load_pattern, load_residue
from services.pipeline import (
    CORRELATIONS_CSV,
    DARK_LEVELS_CSV,
    EXIT_DATA_ERROR,
    EXIT_OK,
    EXP_FIT_JSON,
    SERIES_CSV,
    SUMMARY_CSV,
    THERMAL_FIT_JSON,
    Pipeline,
    PipelineStage,
    PipelineStatus,
    dispatch,
    load_series_csv,
    pattern_name,
)
from services.thermal import slope_from_energy

TEMPS = [10.0, 20.0, 30.0, 40.0, 50.0]


def _run(command, inputs, params, out):
    return dispatch(RunManifest(command=command, inputs=inputs, params=params, output_dir=out), run_id="test")


@pytest.fixture(scope="module")
def simulated(tmp_path_factory):
    out = tmp_path_factory.mktemp("sim")
    code = _run(PipelineCommand.SIMULATE, [], {
        "camera_id": "camA", "width": 32, "height": 24, "frames": 4, "temps": TEMPS,
        "query_frames": 3, "lenses": ["wide", "tele"], "seed": 5,
    }, out)
    assert code == EXIT_OK
    return out / "camA"


def test_simulate_layout(simulated):
    assert (simulated / "profile.txt").exists()
    assert sorted(p.name for p in (simulated / "dark").iterdir()) == [
        "t10.00", "t20.00", "t30.00", "t40.00", "t50.00",
    ]
    assert len(list((simulated / "dark" / "t30.00").glob("*.pgm"))) == 4
    assert (simulated / "query" / "tele" / "frame_0002.pgm.meta").exists()


def test_fingerprint_then_correlate(simulated, tmp_path):
    dark_dirs = [simulated / "dark" / f"t{t:.2f}" for t in TEMPS]
    assert _run(PipelineCommand.FINGERPRINT, dark_dirs, {}, tmp_path / "patterns") == EXIT_OK

    patterns = list_patterns(tmp_path / "patterns")
    assert [p.name for p in patterns] == [pattern_name(t) for t in TEMPS]
    assert load_pattern(patterns[2]).frame_count == 4
    assert load_pattern(patterns[2]).temperature_c == 30.0

    out = tmp_path / "corr"
    queries = [simulated / "query" / "wide", simulated / "query" / "tele"]
    params = {"patterns": [str(tmp_path / "patterns")]}
    assert _run(PipelineCommand.CORRELATE, queries + [tmp_path / "patterns"], params, out) == EXIT_OK

    records = pd.read_csv(out / CORRELATIONS_CSV)
    assert len(records) == 6 * 5
    assert set(records["lens_id"]) == {"wide", "tele"}
    assert set(records["camera_id"]) == {"camA"}
    series = pd.read_csv(out / SERIES_CSV)
    assert series["temperature_c"].tolist() == TEMPS
    assert series["count"].tolist() == [6] * 5
    assert len(pd.read_csv(out / SUMMARY_CSV)) == 5


def test_residue_command(simulated, tmp_path):
    inputs = [simulated / "dark" / "t20.00"]
    assert _run(PipelineCommand.RESIDUE, inputs, {"filter": "wavelet"}, tmp_path) == EXIT_OK
    residue, meta = load_residue(tmp_path / "frame_0000.dsnf")
    assert residue.data.shape == (24, 32)
    assert meta.temperature_c == 20.0
    assert meta.camera_id == "camA"


def test_fingerprint_temperature_override(simulated, tmp_path):
    inputs = [simulated / "query" / "wide"]
    assert _run(PipelineCommand.FINGERPRINT, inputs, {"temperature_c": 31.5}, tmp_path) == EXIT_OK
    assert (tmp_path / pattern_name(31.5)).exists()


def test_benchmark_command(simulated, tmp_path):
    assert _run(PipelineCommand.BENCHMARK, [simulated / "dark" / "t10.00"], {"repetitions": 2}, tmp_path) == EXIT_OK
    rows = pd.read_csv(tmp_path / "benchmark.csv")
    assert rows["filter"].tolist() == ["wavelet", "dct"]
    assert pd.read_csv(tmp_path / "benchmark_sets.csv")["label"].tolist() == ["Set 01", "Set 02"]


# ==================== FITS ====================

def _series_csv(path, rows):
    pd.DataFrame(rows, columns=["camera_id", "temperature_c", "mean_rho", "count"]).to_csv(path, index=False)
    return path


def test_estimate_temp_writes_one_fit_per_camera(tmp_path):
    rows = []
    for cam, t_star in (("camA", 25.0), ("camB", 40.0)):
        rows += [(cam, t, 0.01 * math.exp(0.05 * min(t, t_star)), 10) for t in range(10, 55, 5)]
    path = _series_csv(tmp_path / "series.csv", rows)

    assert _run(PipelineCommand.ESTIMATE_TEMP, [path], {}, tmp_path / "out") == EXIT_OK

    payload = json.loads((tmp_path / "out" / THERMAL_FIT_JSON).read_text())
    assert sorted(payload) == ["camA", "camB"]
    assert payload["camA"]["t_star_c"] == pytest.approx(25.0, abs=0.06)
    assert payload["camB"]["t_star_c"] == pytest.approx(40.0, abs=0.06)
    assert payload["camB"]["forensic_range_c"] == pytest.approx([35.5, 44.5], abs=0.06)


def test_fit_window_and_energy(tmp_path):
    b = slope_from_energy(0.19)
    rows = [("camA", t, 5.0 * math.exp(b * t), 1) for t in range(10, 55, 5)]
    path = _series_csv(tmp_path / "series.csv", rows)

    params = {"t_min": 20.0, "t_max": 40.0}
    assert _run(PipelineCommand.FIT, [path], params, tmp_path / "out") == EXIT_OK

    payload = json.loads((tmp_path / "out" / EXP_FIT_JSON).read_text())["camA"]
    assert payload["n_points"] == 5
    assert payload["delta_e_ev"] == pytest.approx(0.19, rel=1e-5)


def test_series_csv_without_camera_column(tmp_path):
    path = tmp_path / "s.csv"
    pd.DataFrame({"temperature_c": [30.0, 10.0], "mean_rho": [0.2, 0.1]}).to_csv(path, index=False)
    assert load_series_csv(path) == {"all": [(10.0, 0.1), (30.0, 0.2)]}


# ==================== SIMULATOR END TO END ====================

@pytest.mark.slow
def test_default_scenario_writes_one_thermal_fit(tmp_path):
    assert _run(PipelineCommand.SIMULATE, [], {"threads": 4}, tmp_path / "sim") == EXIT_OK
    camera = tmp_path / "sim" / "cam0"
    dark_dirs = [camera / "dark" / f"t{t:.2f}" for t in config.SIM_TEMPERATURES_C]
    assert _run(PipelineCommand.FINGERPRINT, dark_dirs, {"threads": 4}, tmp_path / "patterns") == EXIT_OK

    params = {"patterns": [str(tmp_path / "patterns")], "threads": 4}
    query = [camera / "query" / "lens0", tmp_path / "patterns"]
    assert _run(PipelineCommand.CORRELATE, query, params, tmp_path / "corr") == EXIT_OK
    series = pd.read_csv(tmp_path / "corr" / SERIES_CSV)
    assert series["mean_rho"].iloc[-1] > series["mean_rho"].iloc[0]

    assert _run(PipelineCommand.ESTIMATE_TEMP, [tmp_path / "corr" / SERIES_CSV], {}, tmp_path / "thermal") == EXIT_OK
    payload = json.loads((tmp_path / "thermal" / THERMAL_FIT_JSON).read_text())
    assert list(payload) == ["cam0"]
    fit = payload["cam0"]
    assert fit["b"] > 0
    assert fit["adj_r2"] >= 0.90
    assert fit["forensic_range_c"] == pytest.approx([fit["t_star_c"] - 4.5, fit["t_star_c"] + 4.5])


@pytest.mark.parametrize("delta_e", [0.13, 0.19, 0.37])
def test_dark_levels_recover_activation_energy(delta_e, tmp_path):
    temps = [20.0, 25.0, 30.0, 35.0, 40.0]
    assert _run(PipelineCommand.SIMULATE, [], {
        "camera_id": "camE", "width": 64, "height": 64, "bit_depth": 16, "frames": 3, "temps": temps,
        "query_frames": 0, "delta_e": delta_e, "dark_electrons": 100.0, "seed": 17,
    }, tmp_path / "sim") == EXIT_OK

    dark_dirs = [tmp_path / "sim" / "camE" / "dark" / f"t{t:.2f}" for t in temps]
    assert _run(PipelineCommand.FINGERPRINT, dark_dirs, {}, tmp_path / "patterns") == EXIT_OK
    levels = pd.read_csv(tmp_path / "patterns" / DARK_LEVELS_CSV)
    assert levels["temperature_c"].tolist() == temps
    assert levels["mean_dn"].is_monotonic_increasing

    params = {"t_min": 20.0, "t_max": 40.0}
    assert _run(PipelineCommand.FIT, [tmp_path / "patterns" / DARK_LEVELS_CSV], params, tmp_path / "fit") == EXIT_OK
    payload = json.loads((tmp_path / "fit" / EXP_FIT_JSON).read_text())
    assert payload["camE"]["delta_e_ev"] == pytest.approx(delta_e, rel=0.10)


# ==================== FAILURES ====================

def test_unknown_csv_layout_fails_with_exit_1(tmp_path, capsys):
    path = tmp_path / "bad.csv"
    path.write_text("a,b\n1,2\n")
    manifest = RunManifest(command=PipelineCommand.FIT, inputs=[path], output_dir=tmp_path / "out")
    pipeline = Pipeline(manifest)

    assert pipeline.run() == EXIT_DATA_ERROR

    assert pipeline.status == PipelineStatus.FAILED
    assert pipeline.stage == PipelineStage.FIT
    assert pipeline.stages_completed == [PipelineStage.RESOLVE]
    assert str(path) in capsys.readouterr().err


def test_decreasing_series_is_a_data_error(tmp_path, capsys):
    rows = [("camA", t, math.exp(-0.05 * t), 1) for t in range(10, 55, 5)]
    path = _series_csv(tmp_path / "series.csv", rows)
    assert _run(PipelineCommand.ESTIMATE_TEMP, [path], {}, tmp_path / "out") == EXIT_DATA_ERROR
    assert "MonotoneDecreasing" in capsys.readouterr().err


def test_correlate_without_queries(simulated, tmp_path):
    patterns = tmp_path / "p"
    _run(PipelineCommand.FINGERPRINT, [simulated / "dark" / "t10.00"], {}, patterns)
    code = _run(PipelineCommand.CORRELATE, [patterns], {"patterns": [str(patterns)]}, tmp_path / "out")
    assert code == EXIT_DATA_ERROR
