import filecmp
import json

import numpy as np
import pytest

from imcflab.errors import BadParams, Inconclusive
from imcflab.geometry import scalar_curvature
from imcflab.harness import io
from imcflab.harness.experiments import (ExperimentConfig, build_metric, run_criterion,
                                         run_equivalence, run_stability)
from imcflab.harness.presets import PRESETS, preset


def test_presets_build():
    for name in PRESETS:
        f = preset(name)
        assert f(0.5 * sum(f.domain)) > 0
    with pytest.raises(BadParams):
        preset("torus")
    with pytest.raises(BadParams):
        preset("cone_glue", {"alpha": 1.5})


def test_cone_glue_shape():
    f = preset("cone_glue", {"alpha": 0.8})
    assert f(0.5) == 0.5 and f(3.0) == pytest.approx(0.8 * 3 + 0.2)
    assert f.d1(1.0, side="-") == 1.0 and f.d1(1.0, side="+") == pytest.approx(0.8)
    r = np.linspace(1.1, 10, 20)
    np.testing.assert_allclose(scalar_curvature(f, r), 2 * (1 - 0.64) / f(r) ** 2, rtol=1e-13)


def test_neck_has_strict_interior_dip():
    f = preset("neck")
    r = np.linspace(1.0, 3.0, 2001)
    assert f(r).min() < f(1.0) and f(r).argmin() not in (0, r.size - 1)


def test_config_validation(tmp_path):
    with pytest.raises(BadParams):
        ExperimentConfig(grid_n=10)
    with pytest.raises(BadParams):
        ExperimentConfig(eps_list=(0.1, 0.2))
    with pytest.raises(BadParams):
        ExperimentConfig(tolerances={"criterion": 0.0})
    with pytest.raises(BadParams):
        ExperimentConfig.from_dict({"bogus": 1})
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"metric": {"preset": "hyperbolic"}, "r_init": 0.5}))
    c = ExperimentConfig.load(path)
    assert c.r_init == 0.5 and c.warp() == preset("hyperbolic")
    assert build_metric(preset("neck").to_json()) == preset("neck")


def test_float_output_has_seventeen_digits():
    assert io.fmt(0.1) == "0.10000000000000001"
    text = io.dumps({"b": [0.1, 1], "a": None, "c": True, "d": float("nan")})
    assert json.loads(text) == {"a": None, "b": [0.1, 1], "c": True, "d": None}
    assert "0.10000000000000001" in text


@pytest.mark.parametrize("name,r0,tmax,verdict", [("euclidean", 1.0, 5.0, "pass"),
                                                  ("schwarzschild", 3.0, 4.0, "pass"),
                                                  ("hyperbolic", 1.0, 1.0, "fail")])
def test_run_criterion_examples(tmp_path, name, r0, tmax, verdict):
    c = ExperimentConfig(metric={"preset": name}, r_init=r0, t_max=tmax, out=str(tmp_path))
    run = run_criterion(c)
    assert run.report.verdict == verdict
    if verdict == "pass":
        assert abs(run.report.min_margin) <= 1e-9 * 32 * np.pi * np.exp(tmax / 2)
    for fname in ("flow.csv", "trace.csv", "criterion.csv", "report.json", "manifest.json"):
        assert (tmp_path / fname).exists()
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["metric_digest"] == preset(name).digest()
    assert set(manifest["versions"]) >= {"numpy", "scipy", "numba", "imcflab"}


def test_run_criterion_is_byte_deterministic(tmp_path):
    outs = []
    for k in range(2):
        out = tmp_path / str(k)
        run_criterion(ExperimentConfig(metric={"preset": "neck"}, r_init=0.5, t_max=2.0,
                                       grid_n=512, out=str(out)))
        outs.append(out)
    for fname in ("flow.csv", "trace.csv", "criterion.csv", "report.json", "manifest.json"):
        assert filecmp.cmp(outs[0] / fname, outs[1] / fname, shallow=False)


def test_classical_boundary_matches_bubble_on_smooth_metric():
    base = dict(metric={"preset": "schwarzschild"}, r_init=3.0, t_max=1.0, grid_n=512)
    a = run_criterion(ExperimentConfig(boundary="bubble", **base))
    b = run_criterion(ExperimentConfig(boundary="classical", **base))
    assert a.report.boundary_willmore == pytest.approx(b.report.boundary_willmore, rel=1e-10)


def test_stability_trivial_and_gated(tmp_path):
    rep = run_stability(ExperimentConfig(metric={"preset": "euclidean"}, r_init=0.9,
                                         collar=0.05, out=str(tmp_path)))
    assert rep.verdict == "pass"
    assert all(abs(m.report.min_margin) < 1e-9 for m in rep.members)
    assert (tmp_path / "stability.csv").exists()
    with pytest.raises(Inconclusive):
        run_stability(ExperimentConfig(metric={"preset": "hyperbolic"}, r_init=0.9, collar=0.05))


def test_equivalence_small_family(tmp_path):
    rep = run_equivalence(ExperimentConfig(t_max=1.0, grid_n=512, out=str(tmp_path)), n_random=2)
    rows = {r.metric: r for r in rep.rows}
    assert rows["euclidean"].verdict == "pass" and rows["euclidean"].recovered == pytest.approx(0, abs=1e-6)
    assert rows["hyperbolic"].verdict == "fail"
    assert rows["hyperbolic"].recovered == pytest.approx(-6.0, abs=0.01)
    assert rep.verdict == "pass"
    assert (tmp_path / "equivalence.csv").read_text().startswith("metric,min_scal")
