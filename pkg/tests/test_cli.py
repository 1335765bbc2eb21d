import json

import pytest
from click.testing import CliRunner

from imcflab.harness.cli import main


@pytest.fixture
def runner():
    return CliRunner()


def test_flow_writes_csv(runner, tmp_path):
    res = runner.invoke(main, ["flow", "--metric", "neck", "--r0", "0.5", "--grid", "256",
                               "--out", str(tmp_path)])
    assert res.exit_code == 0, res.output
    assert (tmp_path / "flow.csv").read_text().startswith("r,f,m,u,in_jump")
    assert "jumps: 1" in res.output


def test_criterion_exit_codes(runner):
    ok = runner.invoke(main, ["criterion", "--metric", "euclidean", "--tmax", "2", "--grid", "512"])
    assert ok.exit_code == 0 and "verdict: pass" in ok.output
    bad = runner.invoke(main, ["criterion", "--metric", "hyperbolic", "--tmax", "1", "--grid", "512"])
    assert bad.exit_code == 1 and "verdict: fail" in bad.output


def test_error_exit_code(runner):
    res = runner.invoke(main, ["criterion", "--metric", "nope"])
    assert res.exit_code == 3
    res = runner.invoke(main, ["criterion", "--metric", "euclidean", "--grid", "8"])
    assert res.exit_code == 3


def test_stability_inconclusive_exit_code(runner):
    res = runner.invoke(main, ["stability", "--metric", "hyperbolic"])
    assert res.exit_code == 2


def test_stability_default_passes(runner, tmp_path):
    res = runner.invoke(main, ["stability", "--out", str(tmp_path)])
    assert res.exit_code == 0, res.output
    assert json.loads((tmp_path / "report.json").read_text())["verdict"] == "pass"


def test_config_file_and_tol_flag(runner, tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"metric": {"preset": "schwarzschild"}, "r_init": 3.0, "t_max": 1.0,
                               "grid_n": 256}))
    res = runner.invoke(main, ["criterion", "--config", str(cfg), "--tol", "1e-3",
                               "--out", str(tmp_path / "o")])
    assert res.exit_code == 0, res.output
    manifest = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert manifest["tolerances"]["criterion"] == 1e-3


def test_pflow(runner, tmp_path):
    res = runner.invoke(main, ["pflow", "--metric", "euclidean", "--grid", "4000",
                               "--out", str(tmp_path)])
    assert res.exit_code == 0, res.output
    assert (tmp_path / "pflow.csv").exists()


def test_validate(runner):
    res = runner.invoke(main, ["validate"])
    assert res.exit_code == 0, res.output
    assert "FAIL" not in res.output
