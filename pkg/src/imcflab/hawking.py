"""Hawking mass along the weak flow, the integral criterion, and the pointwise checks."""
from __future__ import annotations

import csv
import json
import weakref
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import BadParams, KinkPoint
from .geometry import WarpFactor, scalar_curvature
from .radial_flow import FlowSolution, _find_crossing, level_radius

FOUR_PI = 4.0 * np.pi
SIXTEEN_PI = 16.0 * np.pi

_GL_X, _GL_W = np.polynomial.legendre.leggauss(10)
_TIME_PIECE = 0.05


def _gauss(fn, a, b):
    """Gauss-Legendre on each [a_k, b_k]; fn maps an (n, 10) node array to values."""
    a, b = np.asarray(a, float), np.asarray(b, float)
    half = 0.5 * (b - a)
    nodes = 0.5 * (a + b)[:, None] + half[:, None] * _GL_X[None, :]
    return half * (fn(nodes) @ _GL_W)


# --- surface quantities -----------------------------------------------------------

def _radius(sol, t):
    return level_radius(sol, t, exact=True)


def _willmore_at(f: WarpFactor, r):
    fs = f.d1(r, side="+")
    return SIXTEEN_PI * np.asarray(fs) ** 2


def willmore(sol: FlowSolution, f: WarpFactor, t):
    """Integral of H^2 over the outer sphere of E_t (post-jump sphere at jump times)."""
    return _willmore_at(f, _radius(sol, t))


def hawking_mass(sol: FlowSolution, f: WarpFactor, t):
    """m_H(t) = e^{t/2} (16 pi - willmore(t))."""
    t = np.asarray(t, dtype=float)
    return np.exp(t / 2) * (SIXTEEN_PI - willmore(sol, f, t))


@dataclass(frozen=True)
class HawkingTrace:
    times: np.ndarray
    radii: np.ndarray
    area: np.ndarray
    willmore: np.ndarray
    mh: np.ndarray

    @property
    def c0(self) -> float:
        return float(np.sqrt(self.area[0] / SIXTEEN_PI) / SIXTEEN_PI)

    def geometric_mass(self) -> np.ndarray:
        """sqrt(|S|/16 pi) (1 - W/16 pi) evaluated directly on each sampled sphere."""
        return np.sqrt(self.area / SIXTEEN_PI) * (1.0 - self.willmore / SIXTEEN_PI)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "r_t", "area", "willmore", "m_H"])
            for row in zip(self.times, self.radii, self.area, self.willmore, self.mh):
                w.writerow([f"{x:.17g}" for x in row])


def hawking_trace(sol: FlowSolution, f: WarpFactor, times) -> HawkingTrace:
    times = np.asarray(times, dtype=float)
    r = np.atleast_1d(_radius(sol, times))
    area = FOUR_PI * np.atleast_1d(f(r)) ** 2
    w = np.atleast_1d(_willmore_at(f, r))
    return HawkingTrace(times, r, area, w, np.exp(times / 2) * (SIXTEEN_PI - w))


# --- bulk term ------------------------------------------------------------------

class _BulkTable:
    """Cumulative integral of e^{u/2}|grad u|^3 dmu over the swept region.

    Off jumps e^{u/2} = f/f_hull and |grad u| = 2 f_s/f, so the integrand is
    32 pi f_s^3 / f_hull per unit arc length.  Cells are split at kinks, spline knots and jump ends.
    """

    def __init__(self, sol: FlowSolution, f: WarpFactor):
        self.f = f
        self.f_hull = sol.m_hull
        start = sol.r_hull_exact
        grid = sol.grid[sol.hull_index:]
        pts = [np.concatenate([[start], grid[grid > start]])]
        k = f.breakpoints
        pts.append(k[(k > start) & (k < sol.grid[-1])])
        for a, b in sol.jumps:
            pts.append(np.array([a, b]))
        p = np.unique(np.concatenate(pts))
        mid = 0.5 * (p[1:] + p[:-1])
        live = np.ones(mid.size, dtype=bool)
        for a, b in sol.jumps:
            live &= ~((mid > a) & (mid < b))
        cell = np.zeros(mid.size)
        cell[live] = _gauss(self.density, p[:-1][live], p[1:][live])
        self.points = p
        self.live = live
        self.cum = np.concatenate([[0.0], np.cumsum(cell)])

    def density(self, r):
        fs = self.f.d1(r, side="+")
        return 32.0 * np.pi * fs**3 * self.f.speed(r) / self.f_hull

    def __call__(self, r):
        r = np.atleast_1d(np.asarray(r, dtype=float))
        r = np.maximum(r, self.points[0])
        k = np.clip(np.searchsorted(self.points, r, side="right") - 1, 0, self.live.size - 1)
        out = self.cum[k].copy()
        part = self.live[k] & (r > self.points[k])
        if np.any(part):
            out[part] += _gauss(self.density, self.points[k][part], r[part])
        return out


_BULK_CACHE: "weakref.WeakKeyDictionary[FlowSolution, dict]" = weakref.WeakKeyDictionary()


def _bulk_table(sol, f):
    per = _BULK_CACHE.setdefault(sol, {})
    key = f.digest()
    if key not in per:
        per[key] = _BulkTable(sol, f)
    return per[key]


def bulk_integral(sol: FlowSolution, f: WarpFactor, t):
    """Integral of e^{u/2}|grad u|^3 over {u <= t}; jumps contribute nothing."""
    t = np.asarray(t, dtype=float)
    r = np.atleast_1d(_radius(sol, t))
    out = _bulk_table(sol, f)(r)
    out = np.where(np.atleast_1d(t) == 0.0, 0.0, out)
    return float(out[0]) if t.ndim == 0 else out


# --- time integrals -------------------------------------------------------------

def _time_breaks(sol: FlowSolution, f: WarpFactor, T: float):
    """Quadrature pieces on [0, T] plus a flag for pieces that start right after a jump.

    m_H is discontinuous at jump times and kink crossings and loses smoothness at
    spline knots.  After a jump the flow restarts where f' may vanish, so m_H
    behaves like a square root there.
    """
    starts = [0.0] + [t for t in sol.jump_times if 0 < t < T]
    br = list(starts) + [T]
    for k in f.breakpoints:
        if sol.r_hull < k < sol.grid[-1]:
            tk = 2 * np.log(float(f(k)) / sol.m_hull)
            if 0 < tk < T:
                br.append(tk)
    br = np.unique(br)
    edges, singular = [br[0]], []
    for a, b in zip(br[:-1], br[1:]):
        n = max(1, int(np.ceil((b - a) / _TIME_PIECE)))
        edges.extend(np.linspace(a, b, n + 1)[1:])
        singular.extend([any(np.isclose(a, s, rtol=0, atol=1e-14) for s in starts)] + [False] * (n - 1))
    return np.asarray(edges), np.asarray(singular)


def integrate_hawking_mass(sol: FlowSolution, f: WarpFactor, T: float) -> float:
    """Gauss-Legendre time integral of m_H over [0, T].

    Pieces starting at a jump use t = a + (b - a) x^2 to absorb the square-root
    behaviour there.
    """
    if T == 0:
        return 0.0
    e, sing = _time_breaks(sol, f, T)

    def mass(tt):
        return hawking_mass(sol, f, tt.ravel()).reshape(tt.shape)

    a, b = e[:-1], e[1:]
    total = np.sum(_gauss(mass, a[~sing], b[~sing]))
    if np.any(sing):
        a, b = a[sing], b[sing]

        def mass_sq(x):
            x01 = (x - a[:, None]) / (b - a)[:, None]
            tt = a[:, None] + (b - a)[:, None] * x01**2
            return mass(tt) * 2 * x01

        total += np.sum(_gauss(mass_sq, a, b))
    return float(total)


def integrated_inequality(sol: FlowSolution, f: WarpFactor, T: float,
                          boundary_willmore: float) -> float:
    """int_0^T m_H dt - T (16 pi - boundary_willmore)."""
    return integrate_hawking_mass(sol, f, T) - T * (SIXTEEN_PI - boundary_willmore)


# --- criterion ------------------------------------------------------------------

@dataclass(frozen=True)
class CriterionReport:
    times: np.ndarray
    margins: np.ndarray
    min_margin: float
    tolerance: float
    verdict: str
    boundary_willmore: float

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "G"])
            for t, g in zip(self.times, self.margins):
                w.writerow([f"{t:.17g}", f"{g:.17g}"])

    def to_json(self, metric_digest: str) -> dict:
        return {"verdict": self.verdict, "min_margin": float(self.min_margin),
                "tolerance": float(self.tolerance), "metric_digest": metric_digest,
                "boundary_willmore": float(self.boundary_willmore)}


def margins(sol: FlowSolution, f: WarpFactor, boundary_willmore: float, t) -> np.ndarray:
    t = np.atleast_1d(np.asarray(t, dtype=float))
    bulk = np.atleast_1d(bulk_integral(sol, f, t))
    return 32.0 * np.pi * np.expm1(t / 2) - bulk - t * (SIXTEEN_PI - boundary_willmore)


def criterion(sol: FlowSolution, f: WarpFactor, phi_willmore: float, t_samples,
              tolerance: float = 1e-6) -> CriterionReport:
    """Evaluate G(t) = 32 pi (e^{t/2}-1) - bulk(t) - t (16 pi - phi_willmore) on the samples."""
    if not tolerance > 0:
        raise BadParams("tolerance must be positive")
    t = np.asarray(t_samples, dtype=float)
    g = margins(sol, f, phi_willmore, t)
    lo = float(np.min(g))
    return CriterionReport(t, g, lo, float(tolerance), "pass" if lo >= -tolerance else "fail",
                           float(phi_willmore))


# --- monotonicity ---------------------------------------------------------------

@dataclass(frozen=True)
class GerochReport:
    times: np.ndarray
    mh: np.ndarray
    min_scal: float
    hypothesis_holds: bool
    monotone: bool
    first_violation: float | None
    tolerance: float

    @property
    def consistent(self) -> bool:
        """Monotonicity must hold whenever the curvature hypothesis does."""
        return self.monotone or not self.hypothesis_holds

    def to_json(self) -> dict:
        return {"min_scal": self.min_scal, "hypothesis_holds": self.hypothesis_holds,
                "monotone": self.monotone, "first_violation": self.first_violation,
                "tolerance": self.tolerance}


def swept_min_scal(sol: FlowSolution, f: WarpFactor, t_max: float, n: int = 4001) -> float:
    """Minimum scalar curvature over the spheres swept off jumps up to time t_max."""
    r_end = level_radius(sol, t_max, exact=True)
    r = np.linspace(sol.r_hull, r_end, n)
    keep = np.ones(r.size, dtype=bool)
    for a, b in sol.jumps:
        keep &= ~((r > a) & (r < b))
    return float(np.min(scalar_curvature(f, r[keep], side="+")))


def geroch_check(sol: FlowSolution, f: WarpFactor, t_max: float | None = None, n: int = 1001,
                 tolerance: float = 1e-6) -> GerochReport:
    """Check that m_H is nondecreasing between samples not separated by a jump or kink."""
    t_max = 0.999 * sol.t_max if t_max is None else float(t_max)
    times = np.linspace(0.0, t_max, n)
    mh = np.asarray(hawking_mass(sol, f, times))
    scale = max(1.0, float(np.max(np.abs(mh))))
    cuts = set(_time_breaks(sol, f, t_max)[0].tolist())
    # only jump and kink times separate stretches
    cuts = np.array(sorted(c for c in cuts if any(np.isclose(c, sol.jump_times))
                           or _is_kink_time(sol, f, c)))
    drop = np.diff(mh) < -tolerance * scale
    if cuts.size:
        seg = np.searchsorted(cuts, times)
        drop &= seg[1:] == seg[:-1]
    first = float(times[np.argmax(drop)]) if np.any(drop) else None
    min_scal = swept_min_scal(sol, f, t_max)
    return GerochReport(times, mh, min_scal, min_scal >= -1e-9, first is None, first, tolerance)


def _is_kink_time(sol, f, t):
    if f.kinks.size == 0 or t <= 0:
        return False
    r = level_radius(sol, t, exact=True)
    return bool(np.any(np.isclose(f.kinks, r, rtol=0, atol=1e-9)))


# --- pointwise identities --------------------------------------------------------

class MhIdentity(NamedTuple):
    lhs: float
    rhs: float


def _local_mass(f: WarpFactor, r: float, tau):
    """e^{tau/2}(16 pi - W) on the sphere reached from r after flow time tau."""
    fr = float(f(r))
    target = fr * np.exp(np.asarray(tau) / 2)
    width = 4.0 * float(np.max(np.abs(tau))) * fr / (2 * float(f.d1(r))) + 1e-12
    lo = np.full(target.shape, max(r - width, f.domain[0] + 1e-15))
    hi = np.full(target.shape, min(r + width, f.domain[1]))
    if f.kinks.size and np.any((f.kinks >= lo.min()) & (f.kinks <= hi.max())):
        raise KinkPoint("difference stencil crosses a kink")
    radius = _find_crossing(f, lo, hi, target)
    return np.exp(tau / 2) * (SIXTEEN_PI - _willmore_at(f, radius))


def mh_derivative_identity(f: WarpFactor, r: float, step: float = 1e-2) -> MhIdentity:
    """(e^{-t/2} dm_H/dt as the flow passes r, integral of Scal over that sphere)."""
    if f.kinks.size and np.any(np.isclose(f.kinks, r, rtol=0, atol=1e-12)):
        raise KinkPoint("sphere sits on a kink")
    if not float(f.d1(r)) > 0:
        raise BadParams("the sphere at r is not outward minimizing (f' <= 0)")
    h = step
    taus = np.array([-h, h, -h / 2, h / 2])
    g = _local_mass(f, r, taus)
    d_h = (g[1] - g[0]) / (2 * h)
    d_h2 = (g[3] - g[2]) / h
    lhs = (4 * d_h2 - d_h) / 3
    rhs = FOUR_PI * float(f(r)) ** 2 * float(scalar_curvature(f, r))
    return MhIdentity(float(lhs), rhs)


def recover_scalar_at_pole(f: WarpFactor, radii=(0.1, 0.05, 0.025)) -> float:
    """Extrapolate the sphere-averaged Scal, read off from dm_H/dt, to R = 0.

    Values at the three radii are fitted by a + b R^2 + c R^4 and a is returned.
    """
    if not f.pole_closed:
        raise BadParams("pole recovery needs a pole-closed metric")
    radii = np.asarray(radii, dtype=float)
    vals = [mh_derivative_identity(f, R, step=1e-2).lhs / (FOUR_PI * float(f(R)) ** 2)
            for R in radii]
    A = np.vander(radii**2, 3, increasing=True)
    return float(np.linalg.solve(A, vals)[0])


def recover_scalar_on_sphere(f: WarpFactor, r: float) -> float:
    """Sphere average of Scal at radius r read off from dm_H/dt."""
    return mh_derivative_identity(f, r).lhs / (FOUR_PI * float(f(r)) ** 2)


def report_json(report: CriterionReport, f: WarpFactor) -> str:
    return json.dumps(report.to_json(f.digest()), sort_keys=True, indent=2)
