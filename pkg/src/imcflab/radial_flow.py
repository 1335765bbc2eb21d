"""Weak inverse mean curvature flow from a coordinate ball, built from the forward infimum of f."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.optimize.elementwise import find_root

from .errors import BadParams, FlowExited, HullEscapes
from .geometry import WarpFactor

_LEVEL_RTOL = 1e-13


def forward_infimum(f: WarpFactor, grid) -> np.ndarray:
    """m_i = min_{j >= i} f(r_j), one backward sweep."""
    values = f(np.asarray(grid, dtype=float)) if isinstance(f, WarpFactor) else np.asarray(f, float)
    return np.minimum.accumulate(values[::-1])[::-1]


def _hull_index(fv: np.ndarray, m: np.ndarray) -> int:
    return int(np.flatnonzero(fv == m[0])[-1])


def hull(f: WarpFactor, r_init: float, grid_n: int = 4096, grid=None) -> float:
    """Largest grid radius achieving the forward infimum from r_init."""
    if grid is None:
        grid = np.linspace(r_init, f.domain[1], grid_n + 1)
    fv = f(grid)
    idx = _hull_index(fv, forward_infimum(fv, grid))
    if idx == len(grid) - 1:
        raise HullEscapes("hull reaches the outer boundary")
    return float(grid[idx])


def _find_crossing(f: WarpFactor, lo, hi, level):
    """Root of f(r) = level in each bracket [lo, hi] with f(lo) <= level <= f(hi)."""
    lo, hi, level = np.broadcast_arrays(*(np.asarray(x, float) for x in (lo, hi, level)))
    if lo.size == 0:
        return lo.copy()
    res = find_root(lambda r, c: f(r) - c, (lo, hi), args=(level,),
                    tolerances=dict(xatol=0.0, xrtol=4 * np.finfo(float).eps))
    # a zero-width or degenerate bracket is reported unsuccessful; fall back to its left end
    return np.where(res.success, res.x, lo)


def _dip_minimum(f: WarpFactor, grid, idx: int, value: float):
    """Continuous minimum (x, f(x)) of the dip sampled by the discrete local minimum grid[idx].

    A plateau of the forward infimum ends where f touches its level tangentially, so
    the grid value overestimates the level by O(h^2) and the end radius by O(h).
    """
    if idx <= 0 or idx + 1 >= grid.size:
        return float(grid[idx]), float(value)
    lo, hi = grid[idx - 1], grid[idx + 1]
    res = minimize_scalar(lambda r: float(f(r)), bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-13 * max(1.0, hi)})
    if res.fun < value:
        return float(res.x), float(res.fun)
    return float(grid[idx]), float(value)


@dataclass(frozen=True, eq=False)
class FlowSolution:
    """Immutable weak flow on a uniform radial grid.

    ``jumps`` holds the continuous plateau intervals (a, b) with their levels in
    ``jump_levels``, and ``jump_nodes`` the grid index runs strictly inside them.
    ``r_hull_exact`` and ``m_hull`` are the continuous counterparts of the grid hull
    radius ``r_hull`` and of the envelope value there.
    """

    warp: WarpFactor
    grid: np.ndarray
    f: np.ndarray
    envelope: np.ndarray
    u: np.ndarray
    r_init: float
    r_hull: float
    hull_index: int
    jumps: tuple
    jump_nodes: tuple
    jump_levels: tuple
    r_hull_exact: float
    m_hull: float

    @property
    def step(self) -> float:
        return float(self.grid[1] - self.grid[0])

    @property
    def in_jump(self) -> np.ndarray:
        mask = np.zeros(self.grid.size, dtype=bool)
        for s, e in self.jump_nodes:
            mask[s:e + 1] = True
        return mask

    @property
    def t_max(self) -> float:
        return float(self.u[-1])

    @cached_property
    def jump_times(self) -> np.ndarray:
        return np.array([2 * np.log(level / self.m_hull) for level in self.jump_levels])

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["r", "f", "m", "u", "in_jump"])
            for row in zip(self.grid, self.f, self.envelope, self.u, self.in_jump.astype(int)):
                w.writerow([f"{row[0]:.17g}", f"{row[1]:.17g}", f"{row[2]:.17g}",
                            f"{row[3]:.17g}", int(row[4])])


def solve_weak_imcf(f: WarpFactor, r_init: float, grid_n: int, r_max: float | None = None
                    ) -> FlowSolution:
    lo, hi = f.domain
    r_max = hi if r_max is None else float(r_max)
    if not lo < r_init < r_max <= hi:
        raise BadParams(f"r_init={r_init} must be interior to the domain {f.domain}")
    if grid_n < 2:
        raise BadParams("grid_n must be at least 2")
    grid = np.linspace(r_init, r_max, grid_n + 1)
    fv = np.asarray(f(grid), dtype=float)
    if np.any(fv <= 0):
        raise BadParams("f must be positive on [r_init, r_max]")
    m = forward_infimum(fv, grid)
    h = _hull_index(fv, m)
    if h == grid_n:
        raise HullEscapes("hull reaches the outer boundary; the flow cannot start")
    u = np.zeros_like(grid)
    u[h:] = 2.0 * np.log(m[h:] / m[h])
    u[h] = 0.0

    runs = []
    inside = np.flatnonzero(m[h:] < fv[h:]) + h
    if inside.size:
        breaks = np.flatnonzero(np.diff(inside) > 1)
        starts = np.concatenate([[inside[0]], inside[breaks + 1]])
        ends = np.concatenate([inside[breaks], [inside[-1]]])
        runs = list(zip(starts.tolist(), ends.tolist()))
    dips = [_dip_minimum(f, grid, e + 1, float(m[e + 1])) for _, e in runs]
    levels = [c for _, c in dips]
    # last grid node at or below each continuous level, before its run
    first = [max(int(np.flatnonzero(fv[h:s] <= c)[-1]) + h if np.any(fv[h:s] <= c) else h, h)
             for (s, _), c in zip(runs, levels)]
    onset = _find_crossing(f, grid[first], grid[[j + 1 for j in first]], levels)
    jumps = tuple((float(a), x) for a, (x, _) in zip(onset, dips))
    r_hull_exact, m_hull = _dip_minimum(f, grid, h, float(m[h]))
    for arr in (grid, fv, m, u):
        arr.setflags(write=False)
    return FlowSolution(f, grid, fv, m, u, float(r_init), float(grid[h]), h, jumps,
                        tuple(runs), tuple(levels), r_hull_exact, m_hull)


def _check_level(sol: FlowSolution, t):
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise BadParams("flow times are nonnegative")
    level = sol.m_hull * np.exp(t / 2)
    if np.any(level > sol.envelope[-1] * (1 + _LEVEL_RTOL)):
        raise FlowExited("level leaves the computational domain")
    return t, level


def level_radius(sol: FlowSolution, t, exact: bool = False):
    """Outer radius of E_t = int{u <= t}.

    The default returns the largest grid radius with u <= t.  ``exact=True`` solves
    m(r) = m(r_hull) e^{t/2} on the continuous warp factor inside the bracketing cell,
    right-continuous at jump times.
    """
    t, level = _check_level(sol, t)
    scalar = t.ndim == 0
    t, level = np.atleast_1d(t), np.atleast_1d(level)
    if not exact:
        idx = np.searchsorted(sol.u, t, side="right") - 1
        out = sol.grid[np.maximum(idx, sol.hull_index)]
        return float(out[0]) if scalar else out
    m, grid = sol.envelope, sol.grid
    j = np.searchsorted(m, level * (1 + _LEVEL_RTOL), side="right") - 1
    below = j < sol.hull_index
    j = np.clip(j, sol.hull_index, grid.size - 1)
    out = grid[j].copy()
    # below the grid envelope: the hull dip handles it
    out[below] = -np.inf
    open_cell = ~below & (j < grid.size - 1) & (sol.f[j] < level)
    if np.any(open_cell):
        jj = j[open_cell]
        target = np.minimum(level[open_cell], sol.f[jj + 1])
        out[open_cell] = _find_crossing(sol.warp, grid[jj], grid[jj + 1], target)
    # a sub-grid dip reaching the level moves the last crossing onto its rising branch
    ends = [(sol.m_hull, sol.r_hull_exact)] + [(lv, b) for lv, (_, b) in zip(sol.jump_levels, sol.jumps)]
    for lv, b in ends:
        hit = (level >= lv) & (out < b)
        if np.any(hit):
            k = min(int(np.searchsorted(grid, b, side="right")), grid.size - 1)
            target = np.minimum(level[hit], sol.f[k])
            out[hit] = _find_crossing(sol.warp, np.full(target.shape, b),
                                      np.full(target.shape, grid[k]), target)
    return float(out[0]) if scalar else out


def grad_u(sol: FlowSolution, r):
    """|grad u| = 2 m'/m with a one-sided grid difference; 0 inside jumps."""
    r = np.atleast_1d(np.asarray(r, dtype=float))
    grid, m = sol.grid, sol.envelope
    i = np.clip(np.searchsorted(grid, r, side="right") - 1, 0, grid.size - 2)
    slope = (m[i + 1] - m[i]) / (grid[i + 1] - grid[i])
    m_r = np.interp(r, grid, m)
    out = 2.0 * slope / m_r / sol.warp.speed(r)
    for a, b in sol.jumps:
        out = np.where((r > a) & (r < b), 0.0, out)
    out = np.where(r < sol.r_hull, 0.0, out)
    return float(out[0]) if out.size == 1 else out
