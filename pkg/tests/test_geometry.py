import json
import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from imcflab.errors import BadParams, KinkPoint
from imcflab.geometry import (WarpFactor, finite_difference_d1, from_csv, from_json,
                              isoperimetric_constant_radial, mean_curvature, mollified_sequence,
                              mollify, scalar_curvature, sup_distance, sup_distance_components)
from imcflab.harness.presets import preset


# --- scalar curvature oracle from the Riemann tensor ----------------------------------

def _ricci_scalar(g, coords):
    n = len(coords)
    ginv = g.inv()
    Gam = [[[sum(ginv[a, d] * (sp.diff(g[d, b], coords[c]) + sp.diff(g[d, c], coords[b])
                                - sp.diff(g[b, c], coords[d])) for d in range(n)) / 2
             for c in range(n)] for b in range(n)] for a in range(n)]

    def riemann(a, b, c, d):
        expr = sp.diff(Gam[a][b][d], coords[c]) - sp.diff(Gam[a][b][c], coords[d])
        expr += sum(Gam[a][c][e] * Gam[e][b][d] - Gam[a][d][e] * Gam[e][b][c] for e in range(n))
        return expr

    ric = sp.Matrix(n, n, lambda b, d: sum(riemann(a, b, a, d) for a in range(n)))
    return sp.simplify(sum(ginv[i, j] * ric[i, j] for i in range(n) for j in range(n)))


@pytest.fixture(scope="module")
def warped_scal():
    r, th, ph = sp.symbols("r theta phi", positive=True)
    F = sp.Function("F")(r)
    g = sp.diag(1, F**2, F**2 * sp.sin(th) ** 2)
    return r, F, _ricci_scalar(g, (r, th, ph))


@pytest.fixture(scope="module")
def areal_scal():
    r, th, ph, m = sp.symbols("r theta phi m", positive=True)
    g = sp.diag(1 / (1 - 2 * m / r), r**2, r**2 * sp.sin(th) ** 2)
    return sp.simplify(_ricci_scalar(g, (r, th, ph)))


def _oracle(warped_scal, expr):
    r, F, S = warped_scal
    return sp.lambdify(r, sp.simplify(S.subs(F, expr).doit()), "numpy")


def test_scal_hyperbolic_matches_riemann_oracle(warped_scal):
    r = warped_scal[0]
    oracle = _oracle(warped_scal, sp.sinh(r))
    x = np.linspace(0.2, 5, 40)
    np.testing.assert_allclose(scalar_curvature(WarpFactor.hyperbolic(), x), oracle(x), rtol=1e-10)


def test_scal_cone_matches_riemann_oracle(warped_scal):
    r = warped_scal[0]
    alpha = sp.Rational(4, 5)
    oracle = _oracle(warped_scal, alpha * r + 1 - alpha)
    x = np.linspace(1.5, 20, 40)
    np.testing.assert_allclose(scalar_curvature(preset("cone_glue"), x), oracle(x), rtol=1e-12)


def test_scal_spline_at_knots_matches_riemann_oracle(warped_scal):
    r = warped_scal[0]
    expr = r + r**3 / (10 * (1 + r**2))
    fn, d1, d2 = (sp.lambdify(r, e) for e in (expr, sp.diff(expr, r), sp.diff(expr, r, 2)))
    knots = np.linspace(0.0, 6.0, 61)
    f = WarpFactor.spline(knots, fn(knots), d1(knots), d2(knots))
    x = knots[5:-1]
    np.testing.assert_allclose(scalar_curvature(f, x), _oracle(warped_scal, expr)(x), rtol=1e-9)


def test_scal_schwarzschild_areal_chart_is_zero(areal_scal):
    assert areal_scal == 0
    x = np.linspace(2.5, 40, 30)
    np.testing.assert_allclose(scalar_curvature(WarpFactor.schwarzschild(), x), 0.0, atol=1e-14)


# --- derivatives -----------------------------------------------------------------------

@pytest.mark.parametrize("f", [WarpFactor.hyperbolic(), preset("neck"),
                               mollify(preset("cone_glue"), 0.1), WarpFactor.schwarzschild()],
                         ids=["hyperbolic", "neck", "mollified", "schwarzschild"])
def test_analytic_derivative_matches_finite_difference(f):
    lo, hi = f.domain
    x = np.linspace(lo + 0.1 * (hi - lo) / 10 + 0.05, lo + (hi - lo) / 3, 37)
    np.testing.assert_allclose(f.d1(x), finite_difference_d1(f, x), rtol=1e-6, atol=1e-8)


def test_kink_requires_side():
    f = preset("cone_glue")
    with pytest.raises(KinkPoint):
        f.d1(1.0)
    assert f.d1(1.0, side="-") == pytest.approx(1.0)
    assert f.d1(1.0, side="+") == pytest.approx(0.8)
    assert mean_curvature(f, 1.0, side="+") == pytest.approx(1.6)


def test_piecewise_linear_slopes_are_exact():
    f = WarpFactor.piecewise_linear([0, 1, 2, 4], [0, 1, 1.5, 2.5])
    np.testing.assert_array_equal(f.d1(np.array([0.5, 1.5, 3.0])), [1.0, 0.5, 0.5])
    np.testing.assert_array_equal(f.kinks, [1.0])


def test_json_roundtrip_and_digest():
    for f in (WarpFactor.euclidean(), preset("neck"), preset("cone_glue"),
              mollify(preset("cone_glue"), 0.05)):
        g = from_json(json.dumps(f.to_json()))
        assert g == f and g.digest() == f.digest()
        x = np.linspace(*f.domain, 101)[1:-1]
        np.testing.assert_array_equal(f(x), g(x))


def test_from_csv(tmp_path):
    path = tmp_path / "w.csv"
    path.write_text("r,f\n0,0\n1,1\n3,2\n")
    f = from_csv(path)
    assert f(2.0) == pytest.approx(1.5)


def test_bad_params():
    with pytest.raises(BadParams):
        WarpFactor.piecewise_linear([0, 1, 1], [0, 1, 2])
    with pytest.raises(BadParams):
        mollify(WarpFactor.schwarzschild(), 0.1)


# --- mollification ------------------------------------------------------------------------

tables = st.lists(st.floats(0.1, 2.0), min_size=2, max_size=6).map(
    lambda s: (np.arange(len(s) + 1, dtype=float) * 2.0,
               np.concatenate([[0.0], np.cumsum(np.asarray(s) * 2.0)])))


@settings(max_examples=40, deadline=None)
@given(tables, st.floats(0.05, 0.5))
def test_mollify_properties(table, eps):
    r, y = table
    f = WarpFactor.piecewise_linear(r, y)
    g = mollify(f, eps)
    slopes = np.diff(y) / np.diff(r)
    lip = float(np.max(slopes))
    x = np.linspace(0.0, r[-1], 2001)
    # pointwise closeness and exactness away from kinks
    assert np.max(np.abs(g(x) - f(x))) <= eps * lip + 1e-12
    kinks = np.concatenate([f.kinks, [np.inf]])
    far = np.min(np.abs(x[:, None] - kinks[None, :]), axis=1) > eps
    far &= (x > eps) & (x < r[-1] - eps)
    np.testing.assert_allclose(g(x[far]), f(x[far]), atol=1e-12)
    # slopes stay within the range of the table
    d = g.d1(x[1:-1])
    assert d.min() >= slopes.min() - 1e-12 and d.max() <= slopes.max() + 1e-12
    # C^1: no jump in the first derivative across the kink windows
    h = 1e-7
    for k in f.kinks:
        for c in (k - eps, k, k + eps):
            if eps < c < r[-1] - eps:
                assert abs(g.d1(c + h) - g.d1(c - h)) < 1e-5


def test_mollify_preserves_concavity():
    g = mollify(preset("cone_glue"), 0.1)
    x = np.linspace(0.01, 5, 500)
    assert np.all(g.d2(x) <= 1e-14)
    assert np.all(scalar_curvature(g, x) >= -1e-9)


def test_mollified_sequence_distances_decrease():
    seq = mollified_sequence(preset("cone_glue"), (0.2, 0.1, 0.05), (0, 10))
    assert all(b < a for a, b in zip(seq.distances, seq.distances[1:]))
    with pytest.raises(BadParams):
        mollified_sequence(preset("cone_glue"), (0.1, 0.2))


# --- sup distance -------------------------------------------------------------------------

profiles = st.lists(st.floats(0.2, 2.0), min_size=3, max_size=3).map(
    lambda s: WarpFactor.piecewise_linear([0.0, 1.0, 2.0, 3.0],
                                          np.concatenate([[0.0], np.cumsum(s)])))


@settings(max_examples=40, deadline=None)
@given(profiles, profiles, profiles)
def test_sup_distance_is_a_pseudometric(f, g, h):
    rng = (0.0, 3.0)
    assert sup_distance(f, f, rng) == 0.0
    assert sup_distance(f, g, rng) == pytest.approx(sup_distance(g, f, rng), abs=1e-14)
    assert sup_distance(f, h, rng) <= sup_distance(f, g, rng) + sup_distance(g, h, rng) + 1e-12


def test_sup_distance_components_closed_form():
    f = WarpFactor.euclidean(r_max=5)
    g = WarpFactor.cone(0.5, r_max=5)
    a, rel = sup_distance_components(f, g, (0.5, 4.0))
    assert a == pytest.approx(2.0)
    assert rel == pytest.approx(2 * math.log(2.0))


def test_isoperimetric_constant_euclidean():
    est = isoperimetric_constant_radial(WarpFactor.euclidean(), (0.1, 10.0))
    assert est.value == pytest.approx(math.sqrt(36 * math.pi), rel=1e-10)
    assert est.label == "radial-competitor estimate"
    assert not est.below_floor
