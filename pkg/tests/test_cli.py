"""Command-line behavior: CSV dialect, exit codes, self checks, artifacts.

Every invocation goes through main(argv) in-process so stdout/stderr and exit
codes are asserted exactly as a shell user would see them.
"""
import io

import numpy as np
import pytest

from hetsched.cli import (CSV_HEADER, emit_csv, main, metrics_to_row,
                          run_validation)
from hetsched.config import SystemConfig, load_config
from hetsched.engine import run, sweep
from hetsched.env import EnvGenerator, load_trace, make_topology

TINY_SETS = ["num_users=2", "num_wifi=1", "num_locations=9",
             "num_subchannels=2", "frame_slots=4", "window_frames=2",
             "num_frames=10", "mc_samples=6", "seed=314"]


def _tiny_argv(*head, extra=()):
    argv = list(head)
    for item in list(TINY_SETS) + list(extra):
        argv += ["--set", item]
    return argv


def _tiny_cfg(extra=()):
    return load_config(None, list(TINY_SETS) + list(extra))


# -------------------------------------------------------------- CSV dialect

def test_header_is_pinned():
    assert CSV_HEADER == ("run_id", "algorithm", "V", "theta", "W",
                          "error_rate", "mean_arrival_mbps", "seed",
                          "avg_power_w", "avg_queue_mb", "avg_delay_s",
                          "offload_pct", "frames")


def test_empty_table_is_header_only(tmp_path):
    path = tmp_path / "empty.csv"
    emit_csv([], str(path))
    assert path.read_text() == ",".join(CSV_HEADER) + "\n"


def test_run_output_matches_library(tmp_path, capsys):
    path = tmp_path / "run.csv"
    assert main(_tiny_argv("run", "-o", str(path))) == 0
    capsys.readouterr()
    cfg = _tiny_cfg()
    metrics = run(cfg, "ensra")
    metrics.run_id = f"ensra-{cfg.seed}"
    lines = path.read_text().splitlines()
    assert lines[0] == ",".join(CSV_HEADER)
    assert lines[1] == ",".join(metrics_to_row(metrics))
    assert len(lines) == 2


def test_row_values_and_precision():
    cfg = _tiny_cfg()
    metrics = run(cfg, "ensra")
    metrics.run_id = "x"
    row = metrics_to_row(metrics)
    assert row[1] == "ensra"
    assert row[4] == "2" and row[7] == "314" and row[12] == "10"
    # offload is reported in percent
    assert float(row[11]) == pytest.approx(metrics.offload_fraction * 100.0,
                                           rel=1e-12)
    # 12 significant digits survive a parse/format round trip
    for text in row[8:12]:
        assert format(float(text), ".12g") == text


def test_run_writes_to_stdout_by_default(capsys):
    assert main(_tiny_argv("run")) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0] == ",".join(CSV_HEADER)
    assert out[1].startswith("ensra-314,ensra,")


def test_timeseries_artifact(tmp_path, capsys):
    csv_path = tmp_path / "m.csv"
    trace_path = tmp_path / "t.csv"
    assert main(_tiny_argv("run", "-o", str(csv_path),
                           "--trace-out", str(trace_path))) == 0
    capsys.readouterr()
    lines = trace_path.read_text().splitlines()
    assert lines[0] == "frame,avg_power_w,queue_user0_mb,queue_user1_mb"
    assert len(lines) == 1 + 10  # one row per frame


# ------------------------------------------------------------------- sweeps

def test_sweep_rows_match_library(tmp_path, capsys):
    path = tmp_path / "sweep.csv"
    argv = _tiny_argv("sweep", "--axis", "v", "--values", "0.25,0.5",
                      "--reps", "2", "-o", str(path))
    assert main(argv) == 0
    capsys.readouterr()
    rows = sweep(_tiny_cfg(), "ensra", "v", [0.25, 0.5], 2)
    lines = path.read_text().splitlines()
    assert len(lines) == 5
    for line, m in zip(lines[1:], rows):
        assert line == ",".join(metrics_to_row(m))


def test_sweep_window_axis_coerces_int(tmp_path, capsys):
    path = tmp_path / "w.csv"
    argv = _tiny_argv("sweep", "--algorithm", "gp_ensra", "--axis", "w",
                      "--values", "1,2", "-o", str(path),
                      extra=["num_frames=4"])
    assert main(argv) == 0
    capsys.readouterr()
    lines = path.read_text().splitlines()
    assert len(lines) == 3
    assert [l.split(",")[4] for l in lines[1:]] == ["1", "2"]


def test_sweep_figures(tmp_path, capsys):
    path = tmp_path / "fig.csv"
    argv = _tiny_argv("sweep", "--axis", "v", "--values", "0.25,0.5",
                      "--figures", "-o", str(path))
    assert main(argv) == 0
    capsys.readouterr()
    for field in ("avg_power_w", "avg_delay_s", "offload_fraction"):
        png = tmp_path / f"fig_{field}.png"
        assert png.exists() and png.stat().st_size > 0


def test_sweep_figures_need_file_output(capsys):
    argv = _tiny_argv("sweep", "--axis", "v", "--values", "0.5", "--figures")
    assert main(argv) == 2
    assert "requires --output" in capsys.readouterr().err


def test_sweep_value_parsing_errors(capsys):
    argv = _tiny_argv("sweep", "--axis", "v", "--values", "a,b")
    assert main(argv) == 2
    assert "cannot parse --values" in capsys.readouterr().err
    argv = _tiny_argv("sweep", "--axis", "v", "--values", ",")
    assert main(argv) == 2
    assert "--values is empty" in capsys.readouterr().err
    argv = _tiny_argv("sweep", "--axis", "v", "--values", "0.5",
                      "--reps", "0")
    assert main(argv) == 2
    assert "--reps must be at least 1" in capsys.readouterr().err


# ------------------------------------------------------------ configuration

def test_rejected_config_exits_2(capsys):
    assert main(["run", "--set", "kappa=-1"]) == 2
    assert capsys.readouterr().err == "error: kappa must be positive\n"


def test_unknown_key_named_in_error(capsys):
    assert main(["run", "--set", "bogus=1"]) == 2
    assert "unknown configuration keys: ['bogus']" in capsys.readouterr().err


def test_missing_config_file_exits_2(tmp_path, capsys):
    assert main(["run", "--config", str(tmp_path / "nope.toml")]) == 2
    assert capsys.readouterr().err.startswith("error: ")


def test_config_file_drives_run(tmp_path, capsys):
    path = tmp_path / "cfg.toml"
    path.write_text("\n".join(f"{s.split('=')[0]} = {s.split('=')[1]}"
                              for s in TINY_SETS) + "\n")
    assert main(["run", "--config", str(path)]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[1].split(",")[7] == "314"


# -------------------------------------------------------------- self checks

def test_validation_all_suites_pass():
    buf = io.StringIO()
    assert run_validation(SystemConfig(), out=buf)
    lines = buf.getvalue().splitlines()
    assert len(lines) == 6
    assert all(": PASS - " in line for line in lines)


def test_validate_single_suite(capsys):
    assert main(["validate", "--suite", "bianchi"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert len(out) == 1
    assert out[0].startswith("bianchi: PASS")


def test_validate_detects_corrupted_solver_tolerance(capsys):
    # a sloppy dual tolerance must surface as a multiplier error, not pass
    argv = ["validate", "--suite", "duality", "--set", "dual_tol=0.01"]
    assert main(argv) == 1
    assert capsys.readouterr().out.startswith("duality: FAIL")


# -------------------------------------------------------------------- trace

def test_dump_trace_round_trips(tmp_path, capsys):
    path = tmp_path / "trace.csv"
    assert main(_tiny_argv("dump-trace", "--frames", "3",
                           "-o", str(path))) == 0
    capsys.readouterr()
    cfg = _tiny_cfg()
    streams = np.random.SeedSequence(cfg.seed).spawn(4)
    topo = make_topology(cfg, np.random.default_rng(streams[0]))
    env = EnvGenerator(cfg, topo, np.random.default_rng(streams[1]))
    frames = [env.generate_frame() for _ in range(3)]
    back = load_trace(str(path))
    assert len(back) == 3
    for truth, again in zip(frames, back):
        np.testing.assert_array_equal(truth.locations, again.locations)
        np.testing.assert_array_equal(truth.gains, again.gains)
        np.testing.assert_array_equal(truth.arrivals_mbps, again.arrivals_mbps)


def test_dump_trace_frame_count_guard(tmp_path, capsys):
    argv = _tiny_argv("dump-trace", "--frames", "0",
                      "-o", str(tmp_path / "t.csv"))
    assert main(argv) == 2
    assert "--frames must be at least 1" in capsys.readouterr().err
