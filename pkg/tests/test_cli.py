import json
from fractions import Fraction

import yaml
from click.testing import CliRunner

from conedflow.cli import main
from conftest import CONFIGS


def invoke(*args):
    return CliRunner().invoke(main, [str(a) for a in args])


def test_trivial_run(tmp_path):
    res = invoke("suite", "--config", CONFIGS / "trivial.yaml", "--out", tmp_path)
    assert res.exit_code == 0, res.output
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["exit"] == 0 and summary["suites"]


def test_malformed_table_is_a_config_error(tmp_path):
    cfg = yaml.safe_load((CONFIGS / "trivial.yaml").read_text())
    # not a group: x * x has no inverse row
    cfg["group"] = {"kind": "finite", "table": [[0, 1], [1, 1]], "generators": {"x": 1}}
    cfg["peripherals"] = [{"generators": ["x"]}]
    path = tmp_path / "bad.yaml"
    path.write_text(yaml.safe_dump(cfg))
    out = tmp_path / "out"
    res = invoke("suite", "--config", path, "--out", out)
    assert res.exit_code == 2
    assert not out.exists()


def test_bad_flags_are_config_errors(tmp_path):
    res = invoke("suite", "--config", CONFIGS / "trivial.yaml", "--p", "1,2", "--out", tmp_path)
    assert res.exit_code == 2
    res = invoke("suite", "--config", CONFIGS / "trivial.yaml", "--profile", "lab", "--out", tmp_path)
    assert res.exit_code == 2


def test_overflow_exits_three(tmp_path):
    res = invoke("build-ball", "--config", CONFIGS / "z2z3.yaml", "--max-vertices", 50, "--out", tmp_path)
    assert res.exit_code == 3
    assert json.loads((tmp_path / "summary.json").read_text())["exit"] == 3


def test_single_mask(tmp_path):
    res = invoke("mask", "--config", CONFIGS / "z2z3.yaml", "--target", "s", "--source", "t s t s", "--out", tmp_path)
    assert res.exit_code == 0, res.output
    rec = json.loads(res.output)
    assert rec["a"] == "g:s" and rec["x"] == "g:t s t s"
    assert sum(Fraction(r["weight"]) for r in rec["support"]) == 1
    res = invoke("mask", "--config", CONFIGS / "z2z3.yaml", "--target", "s", "--out", tmp_path)
    assert res.exit_code == 2


def test_reports_are_deterministic(tmp_path):
    outs = []
    for k in range(2):
        out = tmp_path / f"run{k}"
        res = invoke("suite", "--config", CONFIGS / "z2z3.yaml", "--out", out)
        assert res.exit_code == 0, res.output
        outs.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
    assert outs[0] == outs[1]
