"""
End-to-end tests through the command line
"""

import logging

import numpy as np
import pytest

from cli import build_parser, main
from models import Frame
from services.frame_io import save_frame
from services.logger import set_log_level

TEMPS = ["10.00", "20.00", "30.00", "40.00", "50.00"]


def _main(*args):
    return main([str(a) for a in args])


def _full_run(root):
    sim = root / "sim"
    assert _main("simulate", "--out", sim, "--camera-id", "camA", "--width", 128, "--height", 128,
                 "--frames", 20, "--temps", "10:50:10", "--query-frames", 10, "--dark-electrons", 2,
                 "--seed", 42, "--threads", 2) == 0

    dark = [sim / "camA" / "dark" / f"t{t}" for t in TEMPS]
    assert _main("fingerprint", *dark, "--out", root / "patterns") == 0
    assert _main("correlate", sim / "camA" / "query" / "lens0", "--patterns", root / "patterns",
                 "--out", root / "corr", "--threads", 3) == 0
    assert _main("estimate-temp", root / "corr" / "series.csv", "--out", root / "thermal") == 0


def _tree(root):
    return {p.relative_to(root): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


@pytest.mark.slow
def test_default_scenario_is_byte_reproducible(tmp_path):
    _full_run(tmp_path / "a")
    _full_run(tmp_path / "b")

    first, second = _tree(tmp_path / "a"), _tree(tmp_path / "b")
    assert first.keys() == second.keys()
    assert all(first[k] == second[k] for k in first)
    assert (tmp_path / "a" / "thermal" / "thermal_fit.json").exists()
    assert (tmp_path / "a" / "corr" / "summary.csv").exists()


def test_dimension_mismatch_names_both_files(tmp_path, capsys):
    sim = tmp_path / "sim"
    assert _main("simulate", "--out", sim, "--width", 16, "--height", 16, "--frames", 3,
                 "--temps", "30:30:1", "--query-frames", 0) == 0
    assert _main("fingerprint", sim / "cam0" / "dark" / "t30.00", "--out", tmp_path / "p") == 0

    query = tmp_path / "q" / "odd.pgm"
    query.parent.mkdir()
    save_frame(Frame(bit_depth=10, data=np.arange(12 * 10).reshape(10, 12)), query)
    capsys.readouterr()

    assert _main("correlate", query, "--patterns", tmp_path / "p", "--out", tmp_path / "out") == 1

    err = capsys.readouterr().err
    assert "DimensionMismatch" in err
    assert "odd.pgm" in err
    assert "pattern_t30.00.dsnf" in err


def test_fit_on_series_csv(tmp_path):
    series = tmp_path / "series.csv"
    series.write_text("temperature_c,mean_rho\n10,0.10\n20,0.15\n30,0.22\n40,0.33\n")
    assert _main("fit", series, "--out", tmp_path / "fit", "--t-ref-k", 300) == 0
    assert (tmp_path / "fit" / "exp_fit.json").exists()


@pytest.mark.parametrize("args", [
    [],
    ["simulate"],
    ["simulate", "--out", "x", "--temps", "warm"],
    ["simulate", "--out", "x", "--temps", "50:10:5"],
    ["simulate", "--out", "x", "--bit-depth", "17"],
    ["residue", "does-not-exist.pgm", "--out", "x"],
    ["fingerprint", ".", "--out", "x", "--cutoff", "1.5"],
    ["fingerprint", ".", "--out", "x", "--filter", "median"],
    ["correlate", ".", "--out", "x"],
    ["benchmark", ".", "--out", "x", "--parallel", "1"],
])
def test_usage_errors_exit_2(args, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    with pytest.raises(SystemExit) as exc:
        main(args)
    assert exc.value.code == 2


def test_temps_and_lists_are_parsed():
    args = build_parser().parse_args(["simulate", "--out", "x", "--temps", "10:20:2.5", "--lenses", "wide, tele"])
    assert args.temps == [10.0, 12.5, 15.0, 17.5, 20.0]
    assert args.lenses == ["wide", "tele"]


@pytest.mark.parametrize("spec, expected", [
    ("10:11:0.6", [10.0, 10.6]),
    ("30:30:1", [30.0]),
    ("10:50:10", [10.0, 20.0, 30.0, 40.0, 50.0]),
    ("0:0.3:0.1", [0.0, 0.1, 0.2, 0.3]),
])
def test_temps_never_pass_stop(spec, expected):
    temps = build_parser().parse_args(["simulate", "--out", "x", "--temps", spec]).temps
    assert temps == pytest.approx(expected)
    assert max(temps) <= float(spec.split(":")[1]) + 1e-9


def test_log_level_flag(tmp_path):
    series = tmp_path / "series.csv"
    series.write_text("temperature_c,mean_rho\n10,0.10\n20,0.15\n30,0.22\n")
    try:
        assert _main("--log-level", "warning", "fit", series, "--out", tmp_path / "fit") == 0
        assert logging.getLogger("services.pipeline").level == logging.WARNING
    finally:
        set_log_level("INFO")


def test_help_lists_every_command(capsys):
    with pytest.raises(SystemExit):
        main(["--help"])
    output = capsys.readouterr().out
    for name in ("simulate", "residue", "fingerprint", "correlate", "fit", "estimate-temp", "benchmark"):
        assert name in output
