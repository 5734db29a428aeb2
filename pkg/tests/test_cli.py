import csv
import json

import numpy as np
import pytest

from diffreg.cli import EXIT_CONFIG, EXIT_IO, EXIT_NUMERICAL, EXIT_OK, main
from diffreg.io import load_volume, save_volume


def _rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("syn")
    assert main(["synth", "--grid", "16", "--out", str(out)]) == EXIT_OK
    return out


def test_synth_writes_fields(synth_dir):
    assert load_volume(synth_dir / "m0.vrg").shape == (16, 16, 16)
    assert load_volume(synth_dir / "v_true.vrg").shape == (3, 16, 16, 16)


@pytest.mark.parametrize("p", [1, 2])
def test_transport_reproduces_reference(synth_dir, tmp_path, p):
    out = tmp_path / "m1.vrg"
    argv = ["transport", "--velocity", str(synth_dir / "v_true.vrg"), "--image", str(synth_dir / "m0.vrg"),
            "--output", str(out), "--p", str(p)]
    assert main(argv) == EXIT_OK
    assert np.array_equal(load_volume(out), load_volume(synth_dir / "m1.vrg"))


def test_register_outputs(synth_dir, tmp_path):
    out = tmp_path / "run"
    argv = ["register", "--template", str(synth_dir / "m0.vrg"), "--reference", str(synth_dir / "m1.vrg"),
            "--beta-target", "1e-2", "--out", str(out)]
    assert main(argv) == EXIT_OK
    for name in ("velocity.vrg", "deformed.vrg", "manifest.yaml", "report.json", "timings.json",
                 "levels.csv", "residuals.csv"):
        assert (out / name).exists(), name
    rep = json.loads((out / "report.json").read_text())
    assert rep["manifest"]["config"]["beta_target"] == 1e-2
    assert "wall_time" not in rep and "timers" not in rep
    assert rep["final_mismatch"] < rep["initial_mismatch"]
    assert [float(r["beta"]) for r in _rows(out / "levels.csv")] == [1.0, 0.1, 0.01]
    assert load_volume(out / "velocity.vrg").shape == (3, 16, 16, 16)
    # rerunning from the written manifest reproduces the deterministic report
    again = tmp_path / "again"
    assert main(["register", "--config", str(out / "manifest.yaml"), "--out", str(again)]) == EXIT_OK
    assert json.loads((again / "report.json").read_text())["table"] == rep["table"]


def test_register_flagged_exits_numerical(tmp_path):
    argv = ["register", "--grid", "16", "--no-continuation", "--beta-target", "1e-3", "--max-gn", "1",
            "--eps-n", "1e-6", "--out", str(tmp_path)]
    assert main(argv) == EXIT_NUMERICAL


def test_config_errors(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("config:\n  betta: 1\n")
    assert main(["register", "--config", str(bad), "--out", str(tmp_path)]) == EXIT_CONFIG
    assert main(["register", "--grid", "16", "--beta-target", "-1", "--out", str(tmp_path)]) == EXIT_CONFIG
    assert main(["synth", "--grid", "15", "--out", str(tmp_path)]) == EXIT_CONFIG
    assert main(["synth", "--grid", "16", "--p", "0", "--out", str(tmp_path)]) == EXIT_CONFIG
    with pytest.raises(SystemExit) as exc:
        main(["register", "--preconditioner", "ILU"])
    assert exc.value.code == EXIT_CONFIG
    assert "configuration error" in capsys.readouterr().err


def test_io_errors(synth_dir, tmp_path):
    junk = tmp_path / "junk.vrg"
    junk.write_bytes(b"not a volume")
    assert main(["transport", "--velocity", str(synth_dir / "v_true.vrg"), "--image", str(junk),
                 "--out", str(tmp_path)]) == EXIT_IO
    assert main(["register", "--template", str(tmp_path / "nope.vrg"), "--reference", str(junk),
                 "--out", str(tmp_path)]) == EXIT_IO


def test_mismatched_inputs(synth_dir, tmp_path):
    save_volume(tmp_path / "small.vrg", np.zeros((8, 8, 8)))
    assert main(["transport", "--velocity", str(synth_dir / "v_true.vrg"), "--image", str(tmp_path / "small.vrg"),
                 "--out", str(tmp_path)]) == EXIT_CONFIG


def test_convergence_csv(tmp_path):
    assert main(["convergence", "--grids", "16", "--betas", "0.1", "--out", str(tmp_path)]) == EXIT_OK
    summary = _rows(tmp_path / "convergence_summary.csv")
    assert [r["preconditioner"] for r in summary] == ["InvA", "InvH0", "2LInvH0"]
    assert all(r["converged"] == "True" for r in summary)
    curves = _rows(tmp_path / "convergence.csv")
    assert len(curves) == sum(int(r["iterations"]) + 1 for r in summary)


def test_benchmark_csv(tmp_path):
    argv = ["benchmark", "--grids", "16", "--ps", "1", "2", "--gn", "1", "--pcg", "2", "--out", str(tmp_path)]
    assert main(argv) == EXIT_OK
    rows = _rows(tmp_path / "benchmark.csv")
    assert [int(r["p"]) for r in rows] == [1, 2]
    keys = [k for k in rows[0] if k.startswith("count_")]
    assert all(rows[0][k] == rows[1][k] for k in keys)
    assert int(rows[1]["bytes_fd_ghost"]) > 0 and int(rows[0]["bytes_fd_ghost"]) == 0
    assert float(rows[1]["memory_bytes"]) < float(rows[0]["memory_bytes"])
