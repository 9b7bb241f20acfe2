import json
import os
import subprocess
import sys
from pathlib import Path

import pytest

from halfstokes.cli import main

MANIFESTS = Path(__file__).resolve().parent.parent / "manifests"


def test_list(capsys):
    assert main(["list"]) == 0
    out = capsys.readouterr().out
    assert "verify.partition" in out and "solve.ns" in out


def test_show_prints_ini(capsys):
    assert main(["show", "verify.integral", "--set", "pairs=5"]) == 0
    assert "pairs = 5" in capsys.readouterr().out


@pytest.mark.parametrize("argv", [["verify", "nothing"], ["frobnicate"], ["verify", "integral", "--set", "bogus=1"],
                                  ["verify", "integral", "--set", "noequals"], ["show", "verify.none"],
                                  ["suite", "run", "/nonexistent/manifest.ini"]])
def test_usage_errors_exit_2(argv, tmp_path):
    assert main(argv + (["--out", str(tmp_path)] if argv[0] == "verify" else [])) == 2


def test_verify_partition_writes_artifacts(tmp_path):
    assert main(["verify", "partition", "--out", str(tmp_path)]) == 0
    d = tmp_path / "verify.partition"
    rep = json.loads((d / "report.json").read_text())
    assert rep["status"] == "pass" and rep["paper_anchor"]
    assert (d / "metrics.csv").is_file()
    assert list(d.glob("*.svg")) and list(d.glob("*.png"))


def test_env_var_sets_output_dir(tmp_path, monkeypatch):
    monkeypatch.setenv("HALFSTOKES_OUT", str(tmp_path / "env"))
    assert main(["verify", "integral", "--no-plots"]) == 0
    assert (tmp_path / "env" / "verify.integral" / "report.json").is_file()


def test_dimension_flag_and_seed(tmp_path):
    assert main(["verify", "cofactor", "--n", "3", "--seed", "7", "--set", "states=2", "--no-plots",
                 "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "verify.cofactor" / "report.json").read_text())
    assert rep["status"] == "pass"


def test_empty_manifest_exits_0(tmp_path):
    assert main(["suite", "run", str(MANIFESTS / "empty.ini"), "--out", str(tmp_path)]) == 0
    assert json.loads((tmp_path / "summary.json").read_text())["checks"] == []


def test_failing_manifest_exits_1(tmp_path):
    assert main(["suite", "run", str(MANIFESTS / "failing.ini"), "--out", str(tmp_path), "--no-plots"]) == 1
    s = json.loads((tmp_path / "summary.json").read_text())
    assert s["counts"]["fail"] == 1 and not s["passed"]


def test_console_script_module_entry(tmp_path):
    env = {**os.environ, "HALFSTOKES_OUT": str(tmp_path)}
    r = subprocess.run([sys.executable, "-m", "halfstokes.cli", "verify", "integral", "--no-plots"],
                       capture_output=True, text=True, env=env)
    assert r.returncode == 0, r.stderr
    assert "[PASS] verify.integral" in r.stdout
