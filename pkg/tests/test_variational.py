import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from imcflab.errors import (BadParams, CertificationFailed, CompetitorModifiesOutsideK,
                            GridMismatch, NonMeanConvex, UncertifiedBubble)
from imcflab.geometry import WarpFactor
from imcflab.harness.presets import PRESETS, preset
from imcflab.radial_flow import hull, solve_weak_imcf
from imcflab.variational import (DiscreteProfile, PhiBubble, du_measure, fixed_point_solve,
                                 hull_bruteforce, j_functional, minimality_check, phi_bubble_check,
                                 phi_construct, phi_energy, phi_minimizer, phi_willmore,
                                 trace_check)

START = {"euclidean": 1.0, "schwarzschild": 3.0, "hyperbolic": 1.0, "cone_glue": 0.9,
         "neck": 0.5, "random_nonneg_scal": 0.5}


@pytest.fixture(scope="module")
def neck_profile():
    return DiscreteProfile.from_flow(solve_weak_imcf(preset("neck"), 0.5, 400))


def test_du_measure_closed_form():
    f = WarpFactor.euclidean()
    u = DiscreteProfile.build(f, [1.0, 2.0, 3.0], [0.0, 0.5, 0.5])
    np.testing.assert_allclose(du_measure(u), [0.0, 4 * np.pi * np.expm1(0.5), 0.0])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=12, max_size=12),
       st.lists(st.floats(-3, 3), min_size=12, max_size=12),
       st.floats(0.0, 1.0), st.integers(1, 5), st.integers(6, 10))
def test_j_functional_convex_and_homogeneous(a, b, lam, k0, k1):
    f = WarpFactor.euclidean()
    r = np.linspace(1, 3, 13)
    u = DiscreteProfile.build(f, r, np.log(r) * 2)
    def comp(x):
        v = u.values.copy()
        v[k0:k1 + 1] += np.asarray(x)[k0:k1 + 1]
        return u.with_values(v)
    va, vb = comp(a), comp(b)
    mix = comp(lam * np.asarray(a) + (1 - lam) * np.asarray(b))
    K = (k0, k1)
    assert j_functional(u, mix, K) <= lam * j_functional(u, va, K) + (1 - lam) * j_functional(u, vb, K) + 1e-9
    z = DiscreteProfile.build(f, r, np.zeros(13))
    w = z.with_values(np.concatenate([[0.0], np.asarray(a)]))
    # with u fixed the functional is positively 1-homogeneous around v = 0 on the interior
    c = 2.5
    wK = w.with_values(np.where((np.arange(13) >= k0) & (np.arange(13) <= k1), w.values, 0.0))
    assert j_functional(z, wK.with_values(c * wK.values), K) == pytest.approx(
        c * j_functional(z, wK, K), rel=1e-12, abs=1e-12)


def test_j_functional_errors():
    f = WarpFactor.euclidean()
    u = DiscreteProfile.build(f, np.linspace(1, 2, 6), np.zeros(6))
    with pytest.raises(CompetitorModifiesOutsideK):
        j_functional(u, u.with_values(np.ones(6)), (1, 3))
    other = DiscreteProfile.build(f, np.linspace(1, 3, 6), np.zeros(6))
    with pytest.raises(GridMismatch):
        j_functional(u, other, (1, 3))
    with pytest.raises(BadParams):
        j_functional(u, u, (4, 2))


@pytest.mark.parametrize("name", PRESETS)
def test_envelope_solution_is_minimal(name):
    f = preset(name)
    u = DiscreteProfile.from_flow(solve_weak_imcf(f, START[name], 300))
    rep = minimality_check(u, f, n_trials=300, seed=1)
    assert rep.passed and rep.violations == ()


def test_minimality_detects_bad_candidate(neck_profile):
    u = neck_profile
    x = np.linspace(0, np.pi, u.r.size)
    bad = u.with_values(u.values + 0.1 * np.sin(x) ** 2)
    rep = minimality_check(bad, n_trials=200)
    assert not rep.passed and rep.worst_margin < 0


def test_minimality_is_seeded(neck_profile):
    a = minimality_check(neck_profile, n_trials=50, seed=3)
    b = minimality_check(neck_profile, n_trials=50, seed=3)
    assert a.worst_margin == b.worst_margin


@pytest.mark.parametrize("name,r0", [("euclidean", 1.0), ("schwarzschild", 3.0), ("neck", 1.0),
                                     ("neck", 0.5), ("cone_glue", 0.5)])
def test_fixed_point_agrees_with_envelope(name, r0):
    f = preset(name)
    sol = solve_weak_imcf(f, r0, 512)
    fp = fixed_point_solve(f, r0, 512)
    assert fp.meta["iterations"] <= 200
    assert np.max(np.abs(fp.values - sol.u)) <= 3 * sol.step
    if name != "neck":
        assert fp.meta["monotone_iterates"] and fp.meta["iterations"] <= 50


def test_fixed_point_plateau_matches_jump():
    f = preset("neck")
    sol = solve_weak_imcf(f, 0.5, 512)
    fp = fixed_point_solve(f, 0.5, 512)
    a, b = sol.jumps[0]
    level = fp.values[np.searchsorted(fp.r, 0.5 * (a + b))]
    flat = fp.r[np.isclose(fp.values, level, rtol=0, atol=1e-12)]
    assert abs(flat[0] - a) <= sol.step + 1e-12 and abs(flat[-1] - b) <= sol.step + 1e-12


def test_j_functional_midpoint_convexity_random_pairs(rng):
    f = preset("neck")
    u = DiscreteProfile.from_flow(solve_weak_imcf(f, 0.5, 60))
    for _ in range(1000):
        k0, k1 = np.sort(rng.integers(1, u.n, 2))
        va, vb = u.values.copy(), u.values.copy()
        va[k0:k1 + 1] += rng.normal(0, 1, k1 - k0 + 1)
        vb[k0:k1 + 1] += rng.normal(0, 1, k1 - k0 + 1)
        mid = u.values.copy()
        mid[k0:k1 + 1] = 0.5 * (va[k0:k1 + 1] + vb[k0:k1 + 1])
        K = (int(k0), int(k1))
        lhs = j_functional(u, u.with_values(mid), K)
        rhs = 0.5 * (j_functional(u, u.with_values(va), K) + j_functional(u, u.with_values(vb), K))
        assert lhs <= rhs + 1e-9 * (1 + abs(rhs))


def test_hull_bruteforce_matches_hull():
    for name in PRESETS:
        f = preset(name)
        grid = np.linspace(START[name], f.domain[1], 3001)
        assert hull(f, START[name], grid=grid) == hull_bruteforce(f, grid, START[name])
    grid = np.linspace(1.0, 20.0, 3001)
    assert hull_bruteforce(preset("neck"), grid, 1.0) == pytest.approx(1.5, abs=grid[1] - grid[0])


def test_trace_cases():
    f = WarpFactor.euclidean()
    sol = solve_weak_imcf(f, 1.0, 20000)
    rep = trace_check(sol, f, 1.0)
    assert rep.passed and np.all(np.diff(rep.averages) < 0)
    # averages shrink linearly with the annulus width
    ratio = rep.averages[:-1] / rep.averages[1:]
    assert ratio[-1] == pytest.approx(2.0, rel=1e-2)
    const = trace_check(lambda r: np.ones_like(r), f, 1.0)
    assert const.limit == pytest.approx(1.0) and not const.passed
    g = preset("neck")
    jump = trace_check(solve_weak_imcf(g, 1.0, 4096), g, 1.0)
    assert jump.passed and jump.limit == 0.0


# --- phi bubbles ------------------------------------------------------------------

def test_phi_bubble_euclidean_exact():
    f = WarpFactor.euclidean()
    b = phi_construct(f, 1.0, collar=0.2)
    assert b.certificate.passed and b.certificate.unique
    assert b.certificate.argmin_radius == 1.0
    assert float(b.phi(1.0)) == pytest.approx(2.0, abs=1e-12)
    assert phi_willmore(f, b) == pytest.approx(16 * np.pi, rel=1e-12)


def test_phi_bubble_schwarzschild():
    f = WarpFactor.schwarzschild()
    b = phi_construct(f, 3.0)
    assert float(b.phi(3.0)) == pytest.approx(2 * np.sqrt(1 / 3) / 3, rel=1e-12)
    assert phi_willmore(f, b) == pytest.approx(16 * np.pi / 3, rel=1e-12)


def test_phi_energy_is_minimal_at_boundary_by_brute_force():
    f = preset("random_nonneg_scal", {"seed": 2})
    b = phi_construct(f, 0.8)
    s = np.linspace(b.U1_radius, b.U2_radius, 20001)
    e = phi_energy(f, b, s)
    assert abs(s[np.argmin(e)] - 0.8) <= s[1] - s[0]
    assert phi_minimizer(f, b) == pytest.approx(0.8, abs=1e-9)


def test_bad_phi_is_rejected():
    f = WarpFactor.euclidean()
    zero = PhiBubble(np.array([0.0, 50.0]), np.zeros(2), 0.8, 1.0, 1.2)
    cert = phi_bubble_check(f, zero)
    assert not cert.passed and cert.argmin_radius == pytest.approx(0.8)
    big = PhiBubble(np.array([0.0, 50.0]), np.full(2, 50.0), 0.8, 1.0, 1.2)
    assert phi_bubble_check(f, big).argmin_radius == pytest.approx(1.2)
    with pytest.raises(UncertifiedBubble):
        phi_willmore(f, zero)


def test_phi_construct_errors():
    with pytest.raises(NonMeanConvex):
        phi_construct(preset("neck"), 1.25, collar=0.1)
    with pytest.raises(BadParams):
        phi_construct(WarpFactor.euclidean(), 1.0, collar=2.0)


def test_phi_bubble_at_convex_kink():
    # slope rises at the kink: spheres there are strict local minimizers of area growth
    f = WarpFactor.piecewise_linear([0, 1, 10], [0, 1, 14], regularity="lipschitz")
    b = phi_construct(f, 1.0, collar=0.2, side="-")
    assert b.kink and b.certificate.passed
    assert phi_willmore(f, b) == pytest.approx(4 * np.pi * float(b.phi(1.0)) ** 2)


def test_phi_willmore_checks_mean_curvature():
    f = WarpFactor.euclidean()
    b = phi_construct(f, 1.0)
    shifted = PhiBubble(b.phi_r, b.phi_values + 0.5, b.U1_radius, 1.0, b.U2_radius,
                        b.certificate)
    with pytest.raises(CertificationFailed):
        phi_willmore(f, shifted)
