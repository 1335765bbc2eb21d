"""Discrete radial version of the weak-flow functional and variational mean curvature.

Discretization used throughout
------------------------------
Nodes r_0 < ... < r_N carry sphere areas a_i = 4 pi f(r_i)^2.  For a profile u and a
node range K = [k0, k1],

    J_u^K(v) = sum_{edges (i, i+1) touching K} a_i |v_{i+1} - v_i|
             + sum_{i in K} v_i |Du|_i,      |Du|_i = a_{i-1} (exp|u_i - u_{i-1}| - 1).

Each edge is weighted by its inner sphere and the cell measure |Du|_i is the area
growth the level-set flow assigns to the cell (r_{i-1}, r_i], placed at its outer
node.  With this pairing the envelope solution is an exact discrete minimizer: the
edge fluxes q_i = 4 pi m_i^2 calibrate it.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.optimize import brentq

from ._dp import march, prox_lattice
from .errors import (BadParams, CertificationFailed, CompetitorModifiesOutsideK, GridMismatch,
                     NoConvergence, NonMeanConvex, UncertifiedBubble)
from .geometry import WarpFactor, mean_curvature
from .radial_flow import FlowSolution, solve_weak_imcf

FOUR_PI = 4.0 * np.pi
_GL_X, _GL_W = np.polynomial.legendre.leggauss(10)


@dataclass(frozen=True, eq=False)
class DiscreteProfile:
    r: np.ndarray
    values: np.ndarray
    area: np.ndarray
    volume: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if np.any(np.diff(self.r) <= 0):
            raise BadParams("grid must be strictly increasing")
        if np.any(self.area <= 0) or not np.all(np.isfinite(self.values)):
            raise BadParams("weights must be positive and values finite")

    @classmethod
    def build(cls, f: WarpFactor, r, values, **meta):
        r = np.asarray(r, dtype=float)
        area = FOUR_PI * np.asarray(f(r)) ** 2
        dr = np.gradient(r) * np.asarray(f.speed(r))
        return cls(r, np.asarray(values, dtype=float), area, area * dr, dict(meta))

    @classmethod
    def from_flow(cls, sol: FlowSolution):
        return cls.build(sol.warp, sol.grid, sol.u, r_init=sol.r_init)

    def with_values(self, values):
        return DiscreteProfile(self.r, np.asarray(values, dtype=float), self.area, self.volume,
                               self.meta)

    @property
    def n(self):
        return self.r.size - 1


def du_measure(u: DiscreteProfile) -> np.ndarray:
    """|Du|_i for each node; node 0 carries no cell."""
    out = np.zeros_like(u.values)
    out[1:] = u.area[:-1] * np.expm1(np.abs(np.diff(u.values)))
    return out


def _window(u, K):
    k0, k1 = int(K[0]), int(K[1])
    if not 0 <= k0 <= k1 <= u.n:
        raise BadParams(f"bad index range {K}")
    return k0, k1


def j_functional(u: DiscreteProfile, v: DiscreteProfile, K) -> float:
    """J_u^K(v) for the node range K = (k0, k1), inclusive."""
    if not np.array_equal(u.r, v.r):
        raise GridMismatch("u and v live on different grids")
    k0, k1 = _window(u, K)
    outside = np.ones(u.r.size, dtype=bool)
    outside[k0:k1 + 1] = False
    if np.any(v.values[outside] != u.values[outside]):
        raise CompetitorModifiesOutsideK("competitor differs from u outside K")
    e0, e1 = max(k0 - 1, 0), min(k1, u.n - 1)
    tv = np.sum(u.area[e0:e1 + 1] * np.abs(np.diff(v.values[e0:e1 + 2])))
    lin = np.sum(v.values[k0:k1 + 1] * du_measure(u)[k0:k1 + 1])
    return float(tv + lin)


# --- minimality ------------------------------------------------------------------

@dataclass(frozen=True)
class MinimalityReport:
    seed: int
    trials: int
    worst_margin: float
    tolerance: float
    violations: tuple
    scope: str = "radial competitors only"

    @property
    def passed(self):
        return not self.violations

    def to_json(self) -> str:
        return json.dumps({"seed": self.seed, "trials": self.trials,
                           "worst_margin": self.worst_margin, "tolerance": self.tolerance,
                           "violations": list(self.violations), "scope": self.scope},
                          sort_keys=True)


_KINDS = ("bump", "truncate_min", "truncate_max", "noise")


def _competitor(rng, u, k0, k1, kind):
    v = u.values.copy()
    seg = v[k0:k1 + 1]
    span = 1.0 + float(np.max(np.abs(u.values)))
    if kind == "bump":
        x = np.linspace(0.0, np.pi, k1 - k0 + 3)[1:-1]
        amp = rng.choice([-1.0, 1.0]) * span * 10 ** rng.uniform(-6, 0)
        v[k0:k1 + 1] = seg + amp * np.sin(x) ** 2
    elif kind in ("truncate_min", "truncate_max"):
        c = rng.uniform(seg.min() - 0.1, seg.max() + 0.1)
        v[k0:k1 + 1] = np.minimum(seg, c) if kind == "truncate_min" else np.maximum(seg, c)
    else:
        pieces = rng.integers(1, 6)
        cuts = np.sort(rng.integers(0, seg.size, pieces - 1))
        offs = rng.normal(0.0, span * 10 ** rng.uniform(-4, 0), pieces)
        v[k0:k1 + 1] = seg + np.repeat(offs, np.diff(np.concatenate([[0], cuts, [seg.size]])))
    return u.with_values(v)


def minimality_check(u: DiscreteProfile, f: WarpFactor | None = None, n_trials: int = 1000,
                     tolerance: float = 1e-8, seed: int = 0, clamp=None) -> MinimalityReport:
    """Compare J_u^K(u) with J_u^K(v) for random compactly supported radial competitors.

    Node 0 (the initial sphere) and node N stay fixed; ``clamp`` optionally names more
    leading nodes that belong to the initial set.  A violation is
    J(v) < J(u) - tolerance (1 + |J(u)|).
    """
    rng = np.random.default_rng(seed)
    first = 1 if clamp is None else max(1, int(clamp))
    last = u.n - 1
    if last < first:
        raise BadParams("no free nodes")
    worst = np.inf
    bad = []
    for trial in range(n_trials):
        k0, k1 = np.sort(rng.integers(first, last + 1, 2))
        kind = _KINDS[trial % len(_KINDS)]
        v = _competitor(rng, u, int(k0), int(k1), kind)
        ju = j_functional(u, u, (k0, k1))
        margin = j_functional(u, v, (k0, k1)) - ju
        worst = min(worst, margin)
        if margin < -tolerance * (1.0 + abs(ju)):
            bad.append({"trial": trial, "kind": kind, "K": [int(k0), int(k1)],
                        "margin": float(margin)})
    return MinimalityReport(int(seed), int(n_trials), float(worst), float(tolerance), tuple(bad))


# --- fixed point solver -------------------------------------------------------------

def fixed_point_solve(f: WarpFactor, r_init: float, grid_n: int, max_iter: int = 200,
                      tol: float = 1e-8, levels: int = 4096, outer_value: float | None = None,
                      r_max: float | None = None) -> DiscreteProfile:
    """Solve the discrete weak flow without the envelope construction.

    Each sweep takes one exact proximal step of v -> J_u(v) on a value lattice by
    dynamic programming, with the quadratic weight set by the local slope of |Du|, and
    then re-imposes the discrete stationarity relation along strictly rising runs.
    Iteration stops once two consecutive lattice solutions differ by less than tol.
    The outer Dirichlet value comes from the envelope solution on the same grid
    unless ``outer_value`` is given.
    """
    if outer_value is None:
        outer_value = float(solve_weak_imcf(f, r_init, grid_n, r_max).u[-1])
    r_max = f.domain[1] if r_max is None else r_max
    r = np.linspace(r_init, r_max, grid_n + 1)
    prof = DiscreteProfile.build(f, r, np.zeros_like(r))
    w = prof.area[:-1].copy()
    top = int(round(outer_value * (levels - 1) / (outer_value + 1.0)))
    if top < 1:
        raise BadParams("outer value too small for the lattice")
    d = outer_value / top
    u = outer_value * (r - r_init) / (r_max - r_init)
    prev = None
    monotone = True
    for it in range(1, max_iter + 1):
        D = np.abs(np.diff(u))
        mu = np.zeros_like(u)
        c = np.ones_like(u)
        mu[1:] = w * np.expm1(D)
        c[1:] = w * np.exp(D)
        v = prox_lattice(u, mu, c, w, d, levels, top)
        monotone &= bool(np.all(np.diff(v) >= 0))
        if prev is not None and np.max(np.abs(v - prev)) < tol:
            meta = {"iterations": it, "lattice_step": d, "monotone_iterates": monotone,
                    "outer_value": outer_value}
            return DiscreteProfile(prof.r, v, prof.area, prof.volume, meta)
        prev = v
        u = march(v, w)
    raise NoConvergence(f"no convergence within {max_iter} iterations")


# --- trace --------------------------------------------------------------------------

class TraceReport(NamedTuple):
    rho: np.ndarray
    averages: np.ndarray
    limit: float
    passed: bool


def trace_check(u, f: WarpFactor, r_init: float, rho0: float | None = None,
                tolerance: float = 1e-2) -> TraceReport:
    """Volume averages of |u| over the annuli (r_init, r_init + rho_k), rho_k = 2^-k rho0.

    ``u`` is a FlowSolution, a DiscreteProfile or a callable of r.  Nodal data cannot
    resolve annuli thinner than a cell, so for grid input rho0 is raised until the
    smallest annulus spans two cells.
    """
    if callable(u) and not isinstance(u, (FlowSolution, DiscreteProfile)):
        fn, span, floor = u, f.domain[1] - r_init, 0.0
    else:
        r, vals = (u.grid, u.u) if isinstance(u, FlowSolution) else (u.r, u.values)
        fn, span = (lambda x: np.interp(x, r, vals)), r[-1] - r_init
        floor = 2.0 * float(np.max(np.diff(r))) * 2.0**8
    if rho0 is None:
        rho0 = min(max(min(1.0, 0.25 * span), floor), span)
    rho = rho0 * 2.0 ** -np.arange(9)
    avgs = []
    for p in rho:
        edges = np.linspace(r_init, r_init + p, 65)
        a, b = edges[:-1], edges[1:]
        x = 0.5 * (a + b)[:, None] + 0.5 * (b - a)[:, None] * _GL_X
        dmu = FOUR_PI * np.asarray(f(x)) ** 2 * np.asarray(f.speed(x))
        wts = 0.5 * (b - a)[:, None] * _GL_W
        avgs.append(np.sum(np.abs(fn(x)) * dmu * wts) / np.sum(dmu * wts))
    avgs = np.asarray(avgs)
    limit = float(2 * avgs[-1] - avgs[-2])
    return TraceReport(rho, avgs, limit, abs(limit) <= tolerance)


# --- hull oracle --------------------------------------------------------------------

def hull_bruteforce(f: WarpFactor, grid, r_init: float) -> float:
    """Largest grid radius s >= r_init minimizing 4 pi f(s)^2, by exhaustive scan."""
    grid = np.asarray(grid, dtype=float)
    s = grid[grid >= r_init]
    area = FOUR_PI * np.asarray(f(s)) ** 2
    return float(s[np.flatnonzero(area == area.min())[-1]])


# --- variational mean curvature ------------------------------------------------------

class Certificate(NamedTuple):
    argmin_radius: float
    argmin_index: int
    E_index: int
    gap: float
    unique: bool
    passed: bool


@dataclass(frozen=True)
class PhiBubble:
    """phi is piecewise linear through (phi_r, phi_values), constant beyond its ends."""

    phi_r: np.ndarray
    phi_values: np.ndarray
    U1_radius: float
    E_radius: float
    U2_radius: float
    certificate: Certificate | None = None
    kink: bool = False

    def __post_init__(self):
        if not self.U1_radius < self.E_radius < self.U2_radius:
            raise BadParams("need U1 < E < U2")

    def phi(self, r):
        return np.interp(r, self.phi_r, self.phi_values)

    def to_json(self) -> dict:
        cert = None if self.certificate is None else {
            k: (float(v) if isinstance(v, (float, np.floating)) else v)
            for k, v in self.certificate._asdict().items()}
        return {"phi_r": self.phi_r.tolist(), "phi_values": self.phi_values.tolist(),
                "U1_radius": self.U1_radius, "E_radius": self.E_radius,
                "U2_radius": self.U2_radius, "kink": self.kink, "certificate": cert}


def _dH_dr(f: WarpFactor, r):
    fr, fs, fss = np.asarray(f(r)), f.d1(r, side="+"), f.d2(r, side="+")
    return (2 * fss / fr - 2 * fs**2 / fr**2) * np.asarray(f.speed(r))


def phi_construct(f: WarpFactor, r_init: float, collar: float | None = None,
                  slope_margin: float = 1.0, side: str | None = None,
                  grid_n: int = 4000) -> PhiBubble:
    """Prescribed mean curvature making the ball B_{r_init} the unique constrained minimizer."""
    collar = 0.2 * r_init if collar is None else float(collar)
    lo, hi = f.domain
    if not lo < r_init - collar and r_init + collar < hi:
        raise BadParams("collar leaves the domain")
    H0 = float(mean_curvature(f, r_init, side))
    if H0 <= 0:
        raise NonMeanConvex(f"mean curvature {H0} at r_init is not positive")
    probe = np.linspace(r_init - collar, r_init + collar, 2001)
    lam = slope_margin + float(np.max(np.abs(_dH_dr(f, probe))))
    U1, U2 = r_init - collar, r_init + collar
    nodes = np.array([lo, U1, U2, hi])
    vals = H0 + lam * (r_init - np.clip(nodes, U1, U2))
    bubble = PhiBubble(nodes, vals, U1, float(r_init), U2,
                       kink=bool(np.any(np.isclose(f.kinks, r_init, rtol=0, atol=1e-12))))
    cert = phi_bubble_check(f, bubble, grid_n)
    if not cert.passed:
        raise CertificationFailed(f"argmin at {cert.argmin_radius}, not {r_init}")
    return PhiBubble(nodes, vals, U1, float(r_init), U2, cert, bubble.kink)


def _bubble_grid(bubble, grid_n):
    half = max(grid_n // 2, 2)
    left = np.linspace(bubble.U1_radius, bubble.E_radius, half + 1)
    right = np.linspace(bubble.E_radius, bubble.U2_radius, half + 1)
    return np.concatenate([left, right[1:]]), half


def phi_energy(f: WarpFactor, bubble: PhiBubble, s) -> np.ndarray:
    """4 pi f(s)^2 - int_{U1}^{s} phi 4 pi f^2 ds on an increasing array s starting at U1."""
    s = np.asarray(s, dtype=float)
    a, b = s[:-1], s[1:]
    x = 0.5 * (a + b)[:, None] + 0.5 * (b - a)[:, None] * _GL_X
    dens = bubble.phi(x) * FOUR_PI * np.asarray(f(x)) ** 2 * np.asarray(f.speed(x))
    bulk = np.concatenate([[0.0], np.cumsum(0.5 * (b - a) * (dens @ _GL_W))])
    return FOUR_PI * np.asarray(f(s)) ** 2 - bulk


def phi_bubble_check(f: WarpFactor, bubble: PhiBubble, grid_n: int = 4000) -> Certificate:
    """Exhaustive scan of the constrained energy over grid radii in [U1, U2]."""
    s, e_idx = _bubble_grid(bubble, grid_n)
    energy = phi_energy(f, bubble, s)
    tie = 1e-13 * max(1.0, float(np.max(np.abs(energy))))
    best = float(energy.min())
    cands = np.flatnonzero(energy <= best + tie)
    passed = e_idx in cands
    idx = e_idx if passed else int(cands[0])
    others = np.delete(energy, e_idx)
    gap = float(others.min() - energy[e_idx])
    return Certificate(float(s[idx]), int(idx), int(e_idx), gap, passed and cands.size == 1, passed)


def phi_minimizer(f: WarpFactor, bubble: PhiBubble, grid_n: int = 4000) -> float:
    """Radius minimizing the constrained energy for metric f, refined off the grid.

    The discrete argmin is refined to the root of H(s) = phi(s) in the adjacent cells.
    """
    s, _ = _bubble_grid(bubble, grid_n)
    energy = phi_energy(f, bubble, s)
    k = int(np.argmin(energy))
    if k in (0, s.size - 1):
        raise CertificationFailed("constrained minimizer touches the obstacle")
    lo, hi = s[k - 1], s[k + 1]

    def g(r):
        return float(mean_curvature(f, r, side="+")) - float(bubble.phi(r))

    if g(lo) * g(hi) > 0:
        return float(s[k])
    return float(brentq(g, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps))


def phi_willmore(f: WarpFactor, bubble: PhiBubble, radius: float | None = None) -> float:
    """Integral of phi^2 over the boundary sphere of the certified bubble."""
    if bubble.certificate is None or not bubble.certificate.passed:
        raise UncertifiedBubble("bubble has no passing certificate")
    r = bubble.E_radius if radius is None else float(radius)
    phi = float(bubble.phi(r))
    value = FOUR_PI * float(f(r)) ** 2 * phi**2
    if not bubble.kink and not (f.kinks.size and np.any(np.isclose(f.kinks, r, rtol=0, atol=1e-12))):
        H = float(mean_curvature(f, r))
        if abs(phi - H) > 1e-8 * (1 + abs(H)):
            raise CertificationFailed(f"phi={phi} differs from H={H} on a smooth boundary")
    return value
