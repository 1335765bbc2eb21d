"""Catalog of preset warp factors."""
from __future__ import annotations

import numpy as np
from scipy.integrate import solve_ivp

from ..errors import BadParams
from ..geometry import WarpFactor

PRESETS = ("euclidean", "schwarzschild", "hyperbolic", "cone_glue", "neck", "random_nonneg_scal")

# series start for the pole-regular ODE
_R0 = 1e-3
_STEP = 0.01


def _cone_glue(alpha=0.8, r_max=50.0):
    if not 0 < alpha < 1:
        raise BadParams("cone_glue needs alpha in (0, 1)")
    r = [0.0, 1.0, r_max]
    return WarpFactor.piecewise_linear(r, [0.0, 1.0, alpha * r_max + 1.0 - alpha],
                                       regularity="lipschitz", preset="cone_glue", alpha=alpha)


def _neck(depth=0.6, r_max=20.0, curvature=4.0):
    """f = r on [0, 1], a strict dip to ``depth`` at r = 1.5, back to f = r from r = 3."""
    if not 0 < depth < 1:
        raise BadParams("neck depth must lie in (0, 1)")
    knots = [(0.0, 0.0, 1.0, 0.0), (1.0, 1.0, 1.0, 0.0), (1.5, depth, 0.0, curvature),
             (3.0, 3.0, 1.0, 0.0), (r_max, r_max, 1.0, 0.0)]
    r, f, df, d2f = (list(c) for c in zip(*knots))
    return WarpFactor.spline(r, f, df, d2f, preset="neck", depth=depth, curvature=curvature)


def random_scalar_profile(params: dict):
    """The prescribed scalar curvature S(r) = sum_k c_k exp(-r^2 / w_k^2) stored in a preset."""
    c = np.asarray(params["coeffs"], dtype=float)
    w = np.asarray(params["widths"], dtype=float)

    def S(r):
        r = np.asarray(r, dtype=float)
        return np.sum(c[:, None] * np.exp(-np.atleast_1d(r)[None, :] ** 2 / w[:, None] ** 2),
                      axis=0).reshape(r.shape)

    return S


def _random_nonneg_scal(seed=0, n_bumps=3, r_max=20.0):
    rng = np.random.default_rng(seed)
    params = {"preset": "random_nonneg_scal", "seed": int(seed),
              "coeffs": rng.uniform(0.05, 0.6, n_bumps).tolist(),
              "widths": rng.uniform(0.4, 1.5, n_bumps).tolist()}
    S = random_scalar_profile(params)
    s0 = float(S(0.0))

    def rhs(r, y):
        f, fp = y
        return [fp, (2.0 * (1.0 - fp * fp) / (f * f) - S(r)) * f / 4.0]

    y0 = [_R0 - s0 * _R0**3 / 36.0, 1.0 - s0 * _R0**2 / 12.0]
    r_eval = np.concatenate([[_R0], np.arange(_STEP, r_max, _STEP), [r_max]])
    sol = solve_ivp(rhs, (_R0, r_max), y0, method="DOP853", t_eval=r_eval, rtol=1e-12, atol=1e-14)
    if not sol.success:
        raise BadParams(f"ODE integration failed: {sol.message}")
    f, fp = sol.y
    if np.any(fp <= 0) or np.any(f <= 0):
        raise BadParams("generated warp factor is not increasing; choose another seed")
    fpp = (2.0 * (1.0 - fp * fp) / (f * f) - S(sol.t)) * f / 4.0
    r = np.concatenate([[0.0], sol.t])
    return WarpFactor.spline(r, np.concatenate([[0.0], f]), np.concatenate([[1.0], fp]),
                             np.concatenate([[0.0], fpp]), **params)


def preset(name: str, params: dict | None = None) -> WarpFactor:
    params = dict(params or {})
    try:
        if name == "euclidean":
            return WarpFactor.euclidean(**params)
        if name == "hyperbolic":
            return WarpFactor.hyperbolic(**params)
        if name == "schwarzschild":
            return WarpFactor.schwarzschild(**params)
        if name == "cone_glue":
            return _cone_glue(**params)
        if name == "neck":
            return _neck(**params)
        if name == "random_nonneg_scal":
            return _random_nonneg_scal(**params)
    except TypeError as exc:
        raise BadParams(str(exc)) from exc
    raise BadParams(f"unknown preset {name!r}; choose from {PRESETS}")
