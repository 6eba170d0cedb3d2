"""Command-line interface: exit codes, outputs, file emission, usage errors."""

import csv
import json
import shutil
import subprocess

import pytest

from genagg.cli import main


def run(argv, tmp_path, extra=()):
    return main([*argv, "--out", str(tmp_path), *extra])


def test_catalog_lists_every_aggregator(capsys):
    assert main(["catalog"]) == 0
    out = capsys.readouterr().out
    for name in (
        "mean", "sum", "product", "min", "max", "harmonic_mean", "geometric_mean",
        "root_mean_square", "euclidean_norm", "standard_deviation", "log_sum_exp",
        "min_magnitude", "max_magnitude",
    ):
        assert name in out
    assert "limit:" in out  # min/max rows dispatch directly, no finite f
    assert "a+b" in out  # psi column populated


def test_verify_parametrisations_cmd(tmp_path, capsys):
    assert run(["verify-parametrisations"], tmp_path) == 0
    out = capsys.readouterr().out
    assert out.count("ok") == 13 and "FAIL" not in out
    rows = json.loads((tmp_path / "parametrisations.json").read_text())
    assert len(rows) == 13 and all(r["passed"] for r in rows)
    with open(tmp_path / "parametrisations.csv", newline="") as fh:
        assert len(list(csv.DictReader(fh))) == 13


def test_verify_distributive_cmd(tmp_path, capsys):
    assert run(["verify-distributive"], tmp_path) == 0
    assert "FAIL" not in capsys.readouterr().out
    rows = json.loads((tmp_path / "distributive.json").read_text())
    assert all(r["passed"] for r in rows)
    aggs = {r["aggregator"] for r in rows}
    assert "geometric_mean" in aggs and "log_sum_exp" in aggs


def test_grad_check_cmd(tmp_path, capsys):
    assert run(["grad-check", "--points", "2"], tmp_path) == 0
    assert "FAIL" not in capsys.readouterr().out
    rows = json.loads((tmp_path / "gradcheck.json").read_text())
    names = {r["primitive"] for r in rows}
    assert {"mish", "segment_sum", "segment_max", "matmul_lhs"} <= names
    assert all(r["passed"] for r in rows)


def test_run_regression_writes_results(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"batch_graphs": 4, "eval_graphs": 4}))
    code = run(
        ["run-regression", "--target", "mean", "--method", "mean",
         "--trials", "2", "--epochs", "2", "--config", str(cfg)],
        tmp_path,
    )
    assert code == 0
    out = capsys.readouterr().out
    assert "target=mean" in out and "r=1.0000" in out
    with open(tmp_path / "results.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 2 and rows[0]["method"] == "mean"
    docs = json.loads((tmp_path / "results.json").read_text())
    assert [d["trial"] for d in docs] == [0, 1]


def test_run_gnn_regression_smoke(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"batch_graphs": 2, "eval_graphs": 2, "hidden_dim": 4}))
    code = run(
        ["run-gnn-regression", "--target", "mean", "--method", "mean",
         "--trials", "1", "--epochs", "2", "--config", str(cfg), "--quiet"],
        tmp_path,
    )
    assert code == 0
    docs = json.loads((tmp_path / "results.json").read_text())
    assert docs[0]["experiment"] == "gnn_regression"


def test_format_flag_limits_outputs(tmp_path):
    assert run(["grad-check", "--points", "1", "--format", "csv", "--quiet"], tmp_path) == 0
    assert (tmp_path / "gradcheck.csv").exists()
    assert not (tmp_path / "gradcheck.json").exists()


def test_quiet_suppresses_rows(tmp_path, capsys):
    run(["verify-parametrisations", "--quiet"], tmp_path)
    assert "max_rel_err" not in capsys.readouterr().out


def test_usage_error_exits_2_and_lists_choices(tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        main(["run-regression", "--target", "median", "--method", "mean"])
    assert exc.value.code == 2
    err = capsys.readouterr().err
    assert "geometric_mean" in err  # valid names are part of the message
    with pytest.raises(SystemExit) as exc:
        main(["run-regression", "--method", "mean"])  # --target required
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        main(["no-such-command"])
    assert exc.value.code == 2


def test_bad_config_file_exits_1(tmp_path, capsys):
    code = run(
        ["run-regression", "--target", "mean", "--method", "mean",
         "--config", str(tmp_path / "missing.json")],
        tmp_path,
    )
    assert code == 1
    assert "error:" in capsys.readouterr().err


def test_out_dir_env_fallback(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("GENAGG_OUT_DIR", str(tmp_path / "envout"))
    assert main(["grad-check", "--points", "1", "--quiet"]) == 0
    assert (tmp_path / "envout" / "gradcheck.json").exists()


def test_console_script_installed(tmp_path):
    exe = shutil.which("genagg")
    assert exe, "console script should be on PATH after pip install"
    proc = subprocess.run([exe, "catalog"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "geometric_mean" in proc.stdout
