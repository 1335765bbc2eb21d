"""Fast invariant suite behind ``imcflab validate``. Each check returns (ok, detail)."""
from __future__ import annotations

import numpy as np

from ..geometry import WarpFactor, mollify, scalar_curvature, sup_distance
from ..hawking import (SIXTEEN_PI, bulk_integral, criterion, geroch_check, hawking_mass,
                       integrate_hawking_mass, mh_derivative_identity)
from ..p_approx import p_limit
from ..radial_flow import hull, solve_weak_imcf
from ..variational import (DiscreteProfile, fixed_point_solve, hull_bruteforce, minimality_check,
                           phi_construct, phi_willmore)
from .presets import PRESETS, preset

_START = {"euclidean": 1.0, "schwarzschild": 3.0, "hyperbolic": 1.0, "cone_glue": 0.9,
          "neck": 0.5, "random_nonneg_scal": 0.5}


def euclidean_equality():
    f = WarpFactor.euclidean()
    sol = solve_weak_imcf(f, 1.0, 20000)
    t = np.linspace(0, 5, 501)
    g = criterion(sol, f, SIXTEEN_PI, t).margins
    err = float(np.max(np.abs(g) / (1 + 32 * np.pi * np.exp(t / 2))))
    u_err = float(np.max(np.abs(sol.u - 2 * np.log(sol.grid))))
    return err <= 1e-6 and u_err <= 2 * sol.step, f"scaled |G| {err:.2e}, u error {u_err:.2e}"


def schwarzschild_constancy():
    f = WarpFactor.schwarzschild()
    sol = solve_weak_imcf(f, 3.0, 20000)
    mh = np.asarray(hawking_mass(sol, f, np.linspace(0, 4, 401)))
    ref = 32 * np.pi / 3
    rel = float(np.max(np.abs(mh / ref - 1)))
    return rel <= 1e-4, f"relative spread {rel:.2e}"


def hyperbolic_detection():
    f = WarpFactor.hyperbolic()
    sol = solve_weak_imcf(f, 1.0, 20000)
    rep = criterion(sol, f, float(4 * np.pi * np.sinh(1) ** 2 * (2 / np.tanh(1)) ** 2),
                    np.linspace(0, 1, 201))
    ger = geroch_check(sol, f, t_max=1.0, n=201)
    return rep.verdict == "fail" and ger.first_violation == 0.0, \
        f"verdict {rep.verdict}, first decrease at t={ger.first_violation}"


def coarea_all_presets():
    worst = 0.0
    for name in PRESETS:
        f = preset(name)
        sol = solve_weak_imcf(f, _START[name], 4096)
        for T in (1.0, 2.0, 4.0):
            lhs = integrate_hawking_mass(sol, f, T)
            rhs = 32 * np.pi * np.expm1(T / 2) - float(bulk_integral(sol, f, T))
            worst = max(worst, abs(lhs - rhs) / np.exp(T / 2))
    return worst <= 1e-5, f"worst scaled defect {worst:.2e}"


def neck_hull_and_minimality():
    f = preset("neck")
    sol = solve_weak_imcf(f, 1.0, 2048)
    ok = hull(f, 1.0, grid=sol.grid) == hull_bruteforce(f, sol.grid, 1.0)
    rep = minimality_check(DiscreteProfile.from_flow(sol), f, n_trials=200)
    return ok and rep.passed, f"hull match {ok}, worst margin {rep.worst_margin:.2e}"


def fixed_point_agreement():
    worst = 0.0
    for name, r0 in (("euclidean", 1.0), ("schwarzschild", 3.0), ("neck", 1.0)):
        f = preset(name)
        sol = solve_weak_imcf(f, r0, 512)
        fp = fixed_point_solve(f, r0, 512)
        worst = max(worst, float(np.max(np.abs(fp.values - sol.u))) / sol.step)
    return worst <= 3, f"worst error {worst:.2f} grid steps"


def p_convergence():
    rep = p_limit(WarpFactor.euclidean(), 1.0, (1.5, 1.2, 1.1, 1.05, 1.01), (np.e, np.e**2),
                  K=(2.0, 3.0))
    ok = rep.nonincreasing and rep.distances[-1] <= 5e-2
    ok &= max(rep.oscillations) <= 2 * np.log(1.5) + 1e-6
    return ok, f"final distance {rep.distances[-1]:.3e}"


def bubble_euclidean():
    f = WarpFactor.euclidean()
    b = phi_construct(f, 1.0)
    W = phi_willmore(f, b)
    ok = b.certificate.argmin_radius == 1.0 and abs(float(b.phi(1.0)) - 2) <= 1e-8
    return ok and abs(W / SIXTEEN_PI - 1) <= 1e-8, f"Willmore/16pi - 1 = {W / SIXTEEN_PI - 1:.1e}"


def mass_identity():
    f = WarpFactor.hyperbolic()
    mi = mh_derivative_identity(f, 1.0)
    rel = abs(mi.lhs - mi.rhs) / abs(mi.rhs)
    return rel <= 1e-6, f"relative mismatch {rel:.1e}"


def cone_closed_form():
    f = preset("cone_glue")
    r = np.linspace(1.5, 10, 50)
    scal = scalar_curvature(f, r)
    err = float(np.max(np.abs(scal - 2 * (1 - 0.8**2) / f(r) ** 2)))
    return err <= 1e-12, f"max error {err:.1e}"


def mollification_distances():
    f = preset("cone_glue")
    d = [sup_distance(mollify(f, e), f, (0, 20)) for e in (0.2, 0.1, 0.05)]
    return d[0] > d[1] > d[2], "distances " + ", ".join(f"{x:.3e}" for x in d)


CHECKS = (euclidean_equality, schwarzschild_constancy, hyperbolic_detection, coarea_all_presets,
          neck_hull_and_minimality, fixed_point_agreement, p_convergence, bubble_euclidean,
          mass_identity, cone_closed_form, mollification_distances)


def run_all(checks=CHECKS):
    """Yield (name, ok, detail); an exception counts as a failed check."""
    for check in checks:
        try:
            ok, detail = check()
        except Exception as exc:  # noqa: BLE001 - reported, never swallowed silently
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        yield check.__name__, bool(ok), detail
