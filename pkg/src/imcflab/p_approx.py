"""Radial p-harmonic approximation u_p = -(p-1) log w of the weak flow.

Radially the p-Laplace equation integrates once to f^2 |w'|^{p-2} w' = const, so
w' = -C f^{-2/(p-1)} (in arc length).  The profile is normalized by w(r_init) = 1 and
w(r_max) = 0.  Integrals are accumulated in log space because f^{-2/(p-1)} spans
hundreds of orders of magnitude as p approaches 1.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.special import logsumexp

from .errors import BadParams, IntegralDiverges
from .geometry import WarpFactor
from .radial_flow import solve_weak_imcf

_GL_X, _GL_W = np.polynomial.legendre.leggauss(10)


@dataclass(frozen=True, eq=False)
class PFlowProfile:
    p: float
    r: np.ndarray
    log_w: np.ndarray
    residual: float
    truncation_error: float | None

    @property
    def w(self) -> np.ndarray:
        return np.exp(self.log_w)

    @property
    def u_p(self) -> np.ndarray:
        return -(self.p - 1.0) * self.log_w

    def at(self, r) -> np.ndarray:
        return np.interp(r, self.r, self.u_p)


def _grid(r_init, r_max, n):
    if r_init > 0:
        return np.geomspace(r_init, r_max, n + 1)
    return np.linspace(r_init, r_max, n + 1)


def _log_cells(f: WarpFactor, r, k):
    """log of int over each cell of f^{-k} ds."""
    a, b = r[:-1], r[1:]
    x = 0.5 * (a + b)[:, None] + 0.5 * (b - a)[:, None] * _GL_X
    fx = np.asarray(f(x))
    if np.any(fx <= 0):
        raise IntegralDiverges("warp factor vanishes inside the integration range")
    g = -k * np.log(fx) + np.log(np.asarray(f.speed(x)))
    return logsumexp(g, axis=1, b=0.5 * (b - a)[:, None] * _GL_W)


def _solve(f, r_init, p, r_max, grid_n):
    k = 2.0 / (p - 1.0)
    r = _grid(r_init, r_max, grid_n)
    cells = _log_cells(f, r, k)
    tail = np.logaddexp.accumulate(cells[::-1])[::-1]
    log_w = np.concatenate([tail - tail[0], [-np.inf]])
    return r, log_w


def _residual(f, r, log_w, p):
    """Largest relative jump of the midpoint flux f^2 |w'|^{p-1} between adjacent cells."""
    lw0, lw1 = log_w[:-2], log_w[1:-1]
    with np.errstate(divide="ignore"):
        log_dw = lw0 + np.log(-np.expm1(lw1 - lw0))
    ds = np.diff(r)[:-1] * np.asarray(f.speed(0.5 * (r[:-2] + r[1:-1])))
    mid = 0.5 * (r[:-2] + r[1:-1])
    log_flux = 2 * np.log(np.asarray(f(mid))) + (p - 1.0) * (log_dw - np.log(ds))
    ok = np.isfinite(log_flux)
    return float(np.max(np.abs(np.expm1(np.diff(log_flux[ok]))))) if ok.sum() > 1 else 0.0


def p_harmonic_radial(f: WarpFactor, r_init: float, p: float, r_max: float | None = None,
                      grid_n: int = 20000) -> PFlowProfile:
    if not 1.0 < p < 3.0:
        raise BadParams("p must lie in (1, 3)")
    lo, hi = f.domain
    r_max = hi if r_max is None else float(r_max)
    if not lo <= r_init < r_max <= hi:
        raise BadParams("need r_min <= r_init < r_max <= domain end")
    if r_init == 0.0 and f.pole_closed:
        raise IntegralDiverges("f vanishes at the initial radius")
    r, log_w = _solve(f, r_init, p, r_max, grid_n)
    trunc = None
    if 2 * r_max <= hi:
        r2, log_w2 = _solve(f, r_init, p, 2 * r_max, 2 * grid_n)
        keep = r <= 0.5 * r_max
        u1 = -(p - 1) * log_w[keep]
        u2 = -(p - 1) * np.interp(r[keep], r2, log_w2)
        trunc = float(np.max(np.abs(u1 - u2)))
    return PFlowProfile(float(p), r, log_w, _residual(f, r, log_w, p), trunc)


class PLimitReport(NamedTuple):
    p_list: tuple
    distances: tuple
    nonincreasing: bool
    profile: PFlowProfile
    richardson_distance: float | None
    oscillations: tuple = ()

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["p", "sup_distance", "osc_K"])
            osc = self.oscillations or (float("nan"),) * len(self.p_list)
            for row in zip(self.p_list, self.distances, osc):
                w.writerow([f"{x:.17g}" for x in row])


def _envelope_at(f, r_init, r, grid_n):
    sol = solve_weak_imcf(f, r_init, grid_n)
    return np.interp(r, sol.grid, sol.u)


def p_limit(f: WarpFactor, r_init: float, p_list, compact_range, r_max: float | None = None,
            grid_n: int = 20000, envelope_grid: int = 40000, tolerance: float = 1e-9,
            K=None) -> PLimitReport:
    """Sup distances on compact_range between u_p and the envelope solution along p_list."""
    p_list = tuple(float(p) for p in p_list)
    if any(b >= a for a, b in zip(p_list, p_list[1:])):
        raise BadParams("p_list must decrease toward 1")
    a, b = compact_range
    profiles = [p_harmonic_radial(f, r_init, p, r_max, grid_n) for p in p_list]
    r = profiles[0].r
    sel = (r >= a) & (r <= b)
    ref = _envelope_at(f, r_init, r[sel], envelope_grid)
    dists = tuple(float(np.max(np.abs(pr.u_p[sel] - ref))) for pr in profiles)
    mono = all(y <= x + tolerance for x, y in zip(dists, dists[1:]))
    rich = None
    if len(profiles) >= 2:
        (p1, u1), (p2, u2) = [(pr.p, pr.u_p[sel]) for pr in profiles[-2:]]
        extrap = u2 + (u2 - u1) * (p2 - 1) / (p1 - p2)
        rich = float(np.max(np.abs(extrap - ref)))
    osc = ()
    if K is not None:
        osc = tuple(_oscillation(pr, K) for pr in profiles)
    return PLimitReport(p_list, dists, mono, profiles[-1], rich, osc)


def _oscillation(profile: PFlowProfile, K) -> float:
    sel = (profile.r >= K[0]) & (profile.r <= K[1])
    vals = np.concatenate([profile.u_p[sel], profile.at(np.asarray(K, dtype=float))])
    return float(vals.max() - vals.min())


class HarnackReport(NamedTuple):
    p_list: tuple
    oscillations: tuple
    supremum: float
    limit_estimate: float
    bound: float
    uniform: bool


def harnack_oscillation_check(f: WarpFactor, r_init: float, p_list, K, bound: float | None = None,
                              r_max: float | None = None, grid_n: int = 20000) -> HarnackReport:
    """osc_K u_p over p_list.

    Uniformity means every oscillation stays below ``bound``.  Without an explicit
    bound the reference is 1.5 times the linear extrapolation of the last two
    oscillations to p = 1, which detects blow-up as p decreases.
    """
    if not K[0] < K[1]:
        raise BadParams("K must be a nondegenerate annulus")
    p_list = tuple(float(p) for p in p_list)
    osc = tuple(_oscillation(p_harmonic_radial(f, r_init, p, r_max, grid_n), K) for p in p_list)
    if len(osc) >= 2:
        (p1, o1), (p2, o2) = (p_list[-2], osc[-2]), (p_list[-1], osc[-1])
        limit = o2 + (o2 - o1) * (p2 - 1) / (p1 - p2)
    else:
        limit = osc[-1]
    ref = 1.5 * abs(limit) + 1e-12 if bound is None else float(bound)
    sup = float(max(osc))
    return HarnackReport(p_list, osc, sup, float(limit), ref, sup <= ref)
