import json
import math
import re

import numpy as np
import pytest

from halfstokes import experiments as E
from halfstokes.config import ConfigError, apply_flat, ini_text, read_ini, read_manifest
from halfstokes.reports import RunReport, clean, dumps, metric_rows, suite_summary, write_csv


def test_flat_overrides_are_coerced():
    cfg = E.resolve("verify.partition", {"N": "48", "L": "3.5", "sizes": "16, 32"})
    assert cfg.grid.N == 48 and cfg.grid.L == 3.5
    assert cfg.params["sizes"] == [16, 32]
    cfg = E.resolve("solve.ns", {"audits": "false", "tol_residual": "2e-3"})
    assert cfg.params["audits"] is False and cfg.tolerances["residual"] == 2e-3


@pytest.mark.parametrize("over", [{"bogus": "1"}, {"tol_bogus": "1"}, {"N": "abc"}, {"audits": "maybe"}])
def test_bad_overrides_rejected(over):
    name = "solve.ns" if "audits" in over else "verify.partition"
    with pytest.raises(ConfigError):
        E.resolve(name, over)


def test_unknown_experiment():
    with pytest.raises(ConfigError):
        E.get("verify.nothing")


def test_tolerances_must_be_positive():
    with pytest.raises(ConfigError):
        E.resolve("verify.integral", {"tol_quadrature": "-1"})


def test_randomized_needs_seed():
    base = E.get("verify.symbols").defaults
    assert E.get("verify.symbols").randomized
    with pytest.raises(ConfigError):
        base.updated(seed=None).validate(True)


def test_hash_ignores_output_directory():
    a = E.resolve("verify.integral")
    assert a.config_hash() == a.updated(out_dir="/tmp/else").config_hash()
    assert a.config_hash() != E.resolve("verify.integral", seed=5).config_hash()


def test_ini_round_trip(tmp_path):
    cfg = E.resolve("verify.orthogonality", {"pairs": "2, 1, 3, 1", "tol_ratio_lo": "0.25"})
    path = tmp_path / "c.ini"
    path.write_text(ini_text(cfg))
    back = E.resolve("verify.orthogonality", sections=read_ini(path))
    assert back.to_dict() == cfg.to_dict()
    assert back.config_hash() == cfg.config_hash()


def test_config_for_other_experiment_rejected():
    with pytest.raises(ConfigError):
        apply_flat({"experiment": "solve.heat"}, E.get("verify.integral").defaults)


def test_manifest_reading(tmp_path):
    p = tmp_path / "m.ini"
    p.write_text("[suite]\nseed = 4\n[a]\nexperiment = verify.integral\n[b]\nexperiment = solve.heat\nN = 16\n")
    suite, checks = read_manifest(p)
    assert suite == {"seed": "4"}
    assert [c[0] for c in checks] == ["a", "b"] and checks[1][1]["N"] == "16"
    p.write_text("[a]\nN = 3\n")
    with pytest.raises(ConfigError):
        read_manifest(p)


def test_clean_handles_numpy_and_nonfinite():
    out = clean({"a": np.float64(1.5), "b": np.arange(3), "c": math.inf, "d": math.nan, 3: np.bool_(True)})
    assert out == {"a": 1.5, "b": [0, 1, 2], "c": "inf", "d": "nan", "3": True}
    json.loads(dumps(out))


def test_metric_rows_and_csv(tmp_path):
    rows = metric_rows({"x": 1.0, "nested": {"y": 2}, "v": [0.5, 0.25], "skip": [{"z": 1}]})
    assert [r["metric"] for r in rows] == ["nested.y", "v[0]", "v[1]", "x"]
    path = write_csv(tmp_path / "m.csv", rows)
    text = path.read_text().splitlines()
    assert text[0] == "metric,value" and len(text) == 5


def test_report_status_and_summary():
    with pytest.raises(ValueError):
        RunReport("x", "anchor", "maybe", {}, "h")
    reps = [RunReport("e2", "a", "pass", {}, "h", 3.0, name="b"),
            RunReport("e1", "a", "informative", {}, "h", 9.0, name="a")]
    s = suite_summary(reps)
    assert [c["name"] for c in s["checks"]] == ["a", "b"]
    assert s["passed"] and s["counts"]["pass"] == 1 and s["counts"]["informative"] == 1
    assert "wall_time" not in s["checks"][0]


def test_every_experiment_has_anchor_and_valid_defaults():
    for name, exp in E.REGISTRY.items():
        assert exp.anchor
        assert not re.search(r"(theorem|lemma|proposition|corollary|section|eq\.)\s*\d", exp.anchor, re.I)
        E.resolve(name)
