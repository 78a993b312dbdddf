import csv
import json
import subprocess
import sys
from pathlib import Path

import pytest

import qubitid
from qubitid.cli import main

CONFIGS = Path(qubitid.__file__).parent / "configs"


def read_csv(text):
    lines = text.splitlines()
    assert lines[0].startswith(f"# qubitid {qubitid.__version__}")
    return list(csv.DictReader(lines[1:]))


def test_design_csv(capsys):
    assert main(["design"]) == 0
    rows = {r["quantity"]: r["value"] for r in read_csv(capsys.readouterr().out)}
    assert float(rows["tau2"]) == pytest.approx(62.832, abs=1e-3)
    assert rows["ok"] == "True"


def test_design_invalid_box(tmp_path, capsys):
    cfg = tmp_path / "wide.json"
    cfg.write_text(json.dumps({
        "box": {"lower": {"gamma1": 0.001, "kappa": 0.01, "gamma2": 0.002, "omega": 1.0},
                "upper": {"gamma1": 0.003, "kappa": 0.04, "gamma2": 0.005, "omega": 30.0}},
        "theta_true": {"gamma1": 0.002, "kappa": 0.015, "gamma2": 0.003, "omega": 2.0},
        "times": {"t1": 530, "tau2": 62.83, "t3": 0.6283},
    }))
    assert main(["design", "--config", str(cfg)]) == 2


def test_bad_config_exit_code(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"beta": 1.0}))
    assert main(["design", "--config", str(cfg)]) == 2


def test_run_once_json_deterministic(tmp_path):
    for name in ("a", "b"):
        assert main(["run-once", "--format", "json", "--seed", "3", "--out", str(tmp_path / name)]) == 0
    a = (tmp_path / "a" / "run-once.json").read_text()
    assert a == (tmp_path / "b" / "run-once.json").read_text()
    doc = json.loads(a)
    assert doc["version"] == qubitid.__version__
    assert set(doc["theta_hat"]) == {"gamma1", "kappa", "gamma2", "omega"}
    assert len(doc["sigma_hat"]) == 4


def test_run_once_from_counts(tmp_path, capsys):
    counts = tmp_path / "counts.csv"
    counts.write_text("observable_index,s,n\n1,346460,1000000\n2,793900,1000000\n"
                      "3,772850,1000000\n4,409140,1000000\n")
    assert main(["run-once", "--counts", str(counts)]) == 0
    rows = read_csv(capsys.readouterr().out)
    omega = next(r for r in rows if r["parameter"] == "omega")
    assert float(omega["theta_hat"]) == pytest.approx(2.0, abs=1e-3)


def test_run_once_domain_failure(tmp_path):
    counts = tmp_path / "counts.csv"
    counts.write_text("1,346460,1000000\n2,793900,1000000\n3,672200,1000000\n4,990000,1000000\n")
    assert main(["run-once", "--counts", str(counts)]) == 3


def test_rmse_smoke(capsys):
    assert main(["rmse", "--trials", "2", "--n", "1000"]) == 0
    rows = read_csv(capsys.readouterr().out)
    assert len(rows) == 4 and all(float(r["rmse"]) > 0 for r in rows)


def test_convergence(capsys):
    assert main(["convergence", "--trials", "5", "--n-sweep", "1e4,1e5"]) == 0
    rows = read_csv(capsys.readouterr().out)
    assert [float(r["n"]) for r in rows] == [1e4, 1e5]


def test_regions_files(tmp_path):
    assert main(["regions", "--n", "1e9", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "regions.csv").exists()
    nesting = read_csv((tmp_path / "regions_nesting.csv").read_text())
    assert len(nesting) == 6


def test_adaptive_exit_codes(tmp_path):
    cfg = str(CONFIGS / "adaptive_wide.json")
    assert main(["adaptive", "--config", cfg, "--out", str(tmp_path)]) == 0
    survivors = read_csv((tmp_path / "adaptive.csv").read_text())
    assert len(survivors) == 1 and float(survivors[0]["omega"]) == pytest.approx(2.0, abs=1e-2)
    assert main(["adaptive", "--config", cfg, "--max-rounds", "1", "--out", str(tmp_path)]) == 4
    assert main(["adaptive", "--config", cfg, "--epsilon0", "0", "--out", str(tmp_path)]) == 5


def test_console_entry_point():
    out = subprocess.run([sys.executable, "-m", "qubitid.cli", "--version"],
                         capture_output=True, text=True, check=True).stdout
    assert qubitid.__version__ in out


def test_pure_python_switch():
    import os

    env = dict(os.environ, QUBITID_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-m", "qubitid.cli", "--version"], env=env,
                         capture_output=True, text=True, check=True).stdout
    assert "(python)" in out
