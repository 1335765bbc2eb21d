"""Rotationally symmetric metrics dr^2 + f(r)^2 g_S2 described by their warp factor.

Derivatives returned by :meth:`WarpFactor.d1` and :meth:`WarpFactor.d2` are taken
with respect to arc length ``s`` along radial geodesics.  Every kind except
``schwarzschild`` is parametrized by arc length already, so ``speed = ds/dr = 1``.
Schwarzschild uses the areal chart ``f(r) = r`` and carries
``speed = (1 - 2m/r)^(-1/2)``; volume and radial integrals multiply by it.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from scipy.integrate import cumulative_simpson
from scipy.interpolate import BPoly

from .errors import BadParams, DomainMismatch, EmptyRange, KinkPoint

KINDS = ("euclidean", "schwarzschild", "hyperbolic", "cone", "piecewise_linear",
         "sampled", "spline", "mollified")
REGULARITIES = ("smooth", "lipschitz", "c0")

_KINK_TOL = 1e-12


def _as_array(r):
    return np.asarray(r, dtype=float)


def _near(r, points):
    if points.size == 0:
        return False
    r = np.atleast_1d(r)
    k = np.searchsorted(points, r)
    lo = points[np.clip(k - 1, 0, points.size - 1)]
    hi = points[np.clip(k, 0, points.size - 1)]
    gap = np.minimum(np.abs(lo - r), np.abs(hi - r))
    return bool(np.any(gap <= _KINK_TOL * np.maximum(1.0, np.abs(r))))


# --- biweight kernel K(z) = 15/(16 eps) (1 - (z/eps)^2)^2 and its primitives ---

def _kernel(z, eps):
    s = np.clip(z / eps, -1.0, 1.0)
    return np.where(np.abs(z) < eps, 15.0 / (16.0 * eps) * (1.0 - s * s) ** 2, 0.0)


def _kernel_cdf(z, eps):
    s = np.clip(z / eps, -1.0, 1.0)
    return 0.5 + (15.0 / 16.0) * (s - 2.0 * s**3 / 3.0 + s**5 / 5.0)


def _kink_smoothing(z, eps):
    """Convolution of z_+ with the kernel, minus z_+ itself."""
    s = np.clip(z / eps, -1.0, 1.0)
    g2 = eps * (15.0 * s**2 - 5.0 * s**4 + s**6 + 16.0 * s + 5.0) / 32.0
    return np.where(np.abs(z) < eps, g2 - np.maximum(z, 0.0), 0.0)


class _PiecewiseLinear:
    def __init__(self, x, y):
        self.x = x
        self.y = y
        self.slopes = np.diff(y) / np.diff(x)

    def value(self, r):
        return np.interp(r, self.x, self.y)

    def slope(self, r, side):
        # side '+' -> segment to the right of a node, '-' -> to the left
        if side == "-":
            k = np.searchsorted(self.x, r, side="left") - 1
        else:
            k = np.searchsorted(self.x, r, side="right") - 1
        k = np.clip(k, 0, len(self.slopes) - 1)
        return self.slopes[k]


class _Mollified:
    """Exact convolution of a piecewise-linear table with the biweight kernel.

    The table is extended by odd reflection about both ends.  Writing the extension
    as a line plus ramps at its kinks, the convolution adds a compact correction
    around each kink and leaves linear stretches untouched.
    """

    def __init__(self, x, y, eps):
        self.base = _PiecewiseLinear(x, y)
        self.eps = eps
        a, b = x[0], x[-1]
        s = self.base.slopes
        pos, jump = x[1:-1], s[1:] - s[:-1]
        left = (pos - a) < eps
        right = (b - pos) < eps
        kpos = np.concatenate([(2 * a - pos[left])[::-1], pos, (2 * b - pos[right])[::-1]])
        kjump = np.concatenate([-jump[left][::-1], jump, -jump[right][::-1]])
        self.kpos = kpos
        self.kjump = kjump
        self.cum = np.concatenate([[0.0], np.cumsum(kjump)])
        self.s_base = s[0] - np.sum(-jump[left])
        self.a, self.b = a, b

    def _extended(self, r):
        a, b, P = self.a, self.b, self.base.value
        out = P(r)
        lo, hi = r < a, r > b
        out = np.where(lo, 2 * P(a) - P(2 * a - r), out)
        return np.where(hi, 2 * P(b) - P(2 * b - r), out)

    def _window(self, r):
        lo = np.searchsorted(self.kpos, r - self.eps, side="right")
        hi = np.searchsorted(self.kpos, r + self.eps, side="left")
        return lo, hi

    def _accumulate(self, r, fn):
        lo, hi = self._window(r)
        out = np.zeros_like(r)
        width = int(np.max(hi - lo)) if r.size else 0
        for j in range(width):
            idx = lo + j
            ok = idx < hi
            k = np.where(ok, idx, 0)
            out += np.where(ok, self.kjump[k] * fn(r - self.kpos[k], self.eps), 0.0)
        return out, lo

    def value(self, r):
        corr, _ = self._accumulate(r, _kink_smoothing)
        return self._extended(r) + corr

    def d1(self, r):
        corr, lo = self._accumulate(r, _kernel_cdf)
        return self.s_base + self.cum[lo] + corr

    def d2(self, r):
        corr, _ = self._accumulate(r, _kernel)
        return corr


class WarpFactor:
    """Warp factor f of the metric dr^2 + f(r)^2 g_S2 on the radial interval ``domain``.

    Instances are immutable.  Build them with the class-method constructors or
    :func:`from_json`.
    """

    def __init__(self, kind: str, params: dict, domain: Sequence[float], regularity: str,
                 samples: np.ndarray | None = None):
        if kind not in KINDS:
            raise BadParams(f"unknown warp kind {kind!r}")
        if regularity not in REGULARITIES:
            raise BadParams(f"unknown regularity {regularity!r}")
        r_min, r_max = float(domain[0]), float(domain[1])
        if not (0.0 <= r_min < r_max):
            raise BadParams(f"bad domain {domain}")
        self._kind = kind
        self._params = dict(params)
        self._domain = (r_min, r_max)
        self._regularity = regularity
        self._samples = None
        self._impl = None
        self._kinks = np.empty(0)
        if samples is not None:
            samples = np.array(samples, dtype=float)
            samples.setflags(write=False)
            self._samples = samples
        self._build()

    # --- construction ---------------------------------------------------------
    def _build(self):
        kind, p = self._kind, self._params
        if kind in ("piecewise_linear", "sampled"):
            x, y = self._samples[:, 0], self._samples[:, 1]
            if x.size < 2 or np.any(np.diff(x) <= 0):
                raise BadParams("sample radii must be strictly increasing")
            if not (np.isclose(x[0], self._domain[0]) and np.isclose(x[-1], self._domain[1])):
                raise BadParams("samples must span the domain")
            self._impl = _PiecewiseLinear(x, y)
            sl = self._impl.slopes
            bend = np.abs(np.diff(sl)) > 1e-14 * (1 + np.abs(sl[1:]))
            self._kinks = x[1:-1][bend]
        elif kind == "spline":
            x = self._samples[:, 0]
            if np.any(np.diff(x) <= 0):
                raise BadParams("spline knots must be strictly increasing")
            poly = BPoly.from_derivatives(x, self._samples[:, 1:4])
            self._impl = (poly, poly.derivative(1), poly.derivative(2))
        elif kind == "mollified":
            base = from_json(p["base"])
            if base.kind not in ("piecewise_linear", "sampled"):
                raise BadParams("mollified base must be a piecewise-linear table")
            self._impl = _Mollified(base._impl.x, base._impl.y, float(p["eps"]))
        elif kind == "schwarzschild":
            if not p.get("m", 0) > 0:
                raise BadParams("schwarzschild needs m > 0")
            if self._domain[0] < 2 * p["m"]:
                raise BadParams("schwarzschild domain must start at r >= 2m")
        elif kind == "cone":
            if not 0 < p.get("alpha", 0) <= 1:
                raise BadParams("cone slope must lie in (0, 1]")

    @classmethod
    def euclidean(cls, r_max=50.0, r_min=0.0):
        return cls("euclidean", {}, (r_min, r_max), "smooth")

    @classmethod
    def hyperbolic(cls, r_max=8.0, r_min=0.0):
        return cls("hyperbolic", {}, (r_min, r_max), "smooth")

    @classmethod
    def schwarzschild(cls, m=1.0, r_max=60.0, r_min=None):
        return cls("schwarzschild", {"m": float(m)}, (2 * m if r_min is None else r_min, r_max),
                   "smooth")

    @classmethod
    def cone(cls, alpha, offset=0.0, r_max=50.0, r_min=0.0):
        return cls("cone", {"alpha": float(alpha), "offset": float(offset)}, (r_min, r_max),
                   "smooth")

    @classmethod
    def piecewise_linear(cls, r, f, regularity="lipschitz", **params):
        table = np.column_stack([r, f])
        return cls("piecewise_linear", params, (table[0, 0], table[-1, 0]), regularity, table)

    @classmethod
    def sampled(cls, r, f, regularity="lipschitz", **params):
        table = np.column_stack([r, f])
        return cls("sampled", params, (table[0, 0], table[-1, 0]), regularity, table)

    @classmethod
    def spline(cls, r, f, df, d2f, **params):
        """C^2 quintic Hermite interpolant through values and two derivatives."""
        table = np.column_stack([r, f, df, d2f])
        return cls("spline", params, (table[0, 0], table[-1, 0]), "smooth", table)

    # --- accessors ------------------------------------------------------------
    @property
    def kind(self):
        return self._kind

    @property
    def params(self):
        return dict(self._params)

    @property
    def domain(self):
        return self._domain

    @property
    def regularity(self):
        return self._regularity

    @property
    def samples(self):
        return self._samples

    @property
    def pole_closed(self):
        return self._domain[0] == 0.0

    @property
    def kinks(self) -> np.ndarray:
        """Interior radii where f is not differentiable."""
        return self._kinks.copy()

    @property
    def breakpoints(self) -> np.ndarray:
        """Kinks plus interior knots where higher derivatives may jump."""
        if self._kind == "spline":
            return self._samples[1:-1, 0].copy()
        return self.kinks

    def __repr__(self):
        return f"WarpFactor({self._kind}, params={self._params}, domain={self._domain})"

    def __eq__(self, other):
        return isinstance(other, WarpFactor) and self.to_json() == other.to_json()

    def __hash__(self):
        return hash(self.digest())

    # --- evaluation -----------------------------------------------------------
    def _check(self, r):
        r = _as_array(r)
        lo, hi = self._domain
        slack = 1e-12 * max(1.0, hi)
        if np.any(r < lo - slack) or np.any(r > hi + slack):
            raise DomainMismatch(f"radius outside domain {self._domain}")
        return r

    def __call__(self, r):
        r = self._check(r)
        k, p = self._kind, self._params
        if k == "euclidean":
            out = r.copy()
        elif k == "hyperbolic":
            out = np.sinh(r)
        elif k == "schwarzschild":
            out = r.copy()
        elif k == "cone":
            out = p["alpha"] * r + p["offset"]
        elif k in ("piecewise_linear", "sampled"):
            out = self._impl.value(r)
        elif k == "spline":
            out = self._impl[0](r)
        else:
            out = self._impl.value(np.atleast_1d(r)).reshape(r.shape)
        return out if out.ndim else float(out)

    def _kink_guard(self, r, side):
        if side is None and self._kind in ("piecewise_linear", "sampled") and _near(r, self._kinks):
            raise KinkPoint(f"{self._kind} warp factor is not differentiable there")

    def d1(self, r, side=None):
        """df/ds.  ``side`` ('-' or '+') selects a one-sided derivative at kinks."""
        r = self._check(r)
        self._kink_guard(r, side)
        k, p = self._kind, self._params
        if k == "euclidean":
            out = np.ones_like(r)
        elif k == "hyperbolic":
            out = np.cosh(r)
        elif k == "schwarzschild":
            out = np.sqrt(np.maximum(1.0 - 2.0 * p["m"] / r, 0.0))
        elif k == "cone":
            out = np.full_like(r, p["alpha"])
        elif k in ("piecewise_linear", "sampled"):
            out = self._impl.slope(r, side or "+")
        elif k == "spline":
            out = self._impl[1](r)
        else:
            out = self._impl.d1(np.atleast_1d(r)).reshape(r.shape)
        return out if np.ndim(out) else float(out)

    def d2(self, r, side=None):
        """d^2f/ds^2."""
        r = self._check(r)
        self._kink_guard(r, side)
        k, p = self._kind, self._params
        if k == "hyperbolic":
            out = np.sinh(r)
        elif k == "schwarzschild":
            out = p["m"] / r**2
        elif k == "spline":
            out = self._impl[2](r)
        elif k == "mollified":
            out = self._impl.d2(np.atleast_1d(r)).reshape(r.shape)
        else:
            out = np.zeros_like(r)
        return out if np.ndim(out) else float(out)

    def speed(self, r):
        """ds/dr for the radial coordinate of this kind."""
        r = _as_array(r)
        if self._kind == "schwarzschild":
            out = 1.0 / np.sqrt(1.0 - 2.0 * self._params["m"] / r)
        else:
            out = np.ones_like(r)
        return out if out.ndim else float(out)

    # --- serialization --------------------------------------------------------
    def to_json(self) -> dict:
        doc = {"kind": self._kind, "params": self._params, "domain": list(self._domain),
               "regularity": self._regularity}
        if self._samples is not None:
            doc["samples"] = self._samples.tolist()
        return doc

    def digest(self) -> str:
        blob = json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def from_json(doc) -> WarpFactor:
    if isinstance(doc, str):
        doc = json.loads(doc)
    return WarpFactor(doc["kind"], doc.get("params", {}), doc["domain"],
                      doc.get("regularity", "smooth"), doc.get("samples"))


def from_csv(path, regularity="lipschitz") -> WarpFactor:
    """Load a two-column (r, f) table; a non-numeric first row is treated as a header."""
    rows = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row:
                continue
            try:
                rows.append([float(row[0]), float(row[1])])
            except ValueError:
                if rows:
                    raise BadParams(f"non-numeric row {row}")
    table = np.array(rows)
    if table.shape[0] < 2 or np.any(np.diff(table[:, 0]) <= 0):
        raise BadParams("CSV radii must be strictly increasing")
    return WarpFactor.sampled(table[:, 0], table[:, 1], regularity=regularity)


# --- curvature ----------------------------------------------------------------

def mean_curvature(f: WarpFactor, r, side=None):
    """Mean curvature 2 f'/f of the coordinate sphere at radius r."""
    return 2.0 * f.d1(r, side) / f(r)


def scalar_curvature(f: WarpFactor, r, side=None):
    fr, fs = f(r), f.d1(r, side)
    return -4.0 * f.d2(r, side) / fr + 2.0 * (1.0 - fs * fs) / fr**2


def finite_difference_d1(f: WarpFactor, r):
    """Central difference df/ds with step max(1e-6, 1e-8 r) in r."""
    r = _as_array(r)
    h = np.maximum(1e-6, 1e-8 * r)
    return (f(r + h) - f(r - h)) / (2 * h) / f.speed(r)


# --- mollification ------------------------------------------------------------

def mollify(f: WarpFactor, eps: float, step: float | None = None) -> WarpFactor:
    """Smooth f at scale eps by convolution with a biweight bump.

    Piecewise-linear inputs are convolved exactly.  Other kinds are first sampled
    on a uniform grid of spacing ``step`` (default eps/4).
    """
    lo, hi = f.domain
    if not 0 < eps < (hi - lo) / 4:
        raise BadParams("mollification radius must lie in (0, domain length / 4)")
    if f.kind in ("piecewise_linear", "sampled"):
        base = f
    else:
        if f.kind == "schwarzschild":
            raise BadParams("mollify expects an arc-length parametrized warp factor")
        h = step or eps / 4
        n = int(math.ceil((hi - lo) / h))
        if n > 400_000:
            raise BadParams("mollification grid too fine")
        x = np.linspace(lo, hi, n + 1)
        base = WarpFactor.piecewise_linear(x, f(x), regularity=f.regularity)
    out = WarpFactor("mollified", {"eps": float(eps), "base": base.to_json()}, f.domain, "smooth")
    rng = (lo, hi)
    dist = sup_distance_components(f, out, rng)
    out._params["reported_sup_distance"] = dist.absolute
    return out


# --- distances ----------------------------------------------------------------

class SupDistance(NamedTuple):
    absolute: float   # sup |f - g|
    relative: float   # sup |log(f^2 / g^2)|


def _dense_grid(f, g, rng, n):
    a, b = float(rng[0]), float(rng[1])
    for w in (f, g):
        lo, hi = w.domain
        if a < lo - 1e-12 or b > hi + 1e-12:
            raise DomainMismatch(f"range {rng} not inside domain {w.domain}")
    if not a < b:
        raise EmptyRange(f"empty range {rng}")
    x = np.linspace(a, b, n)
    nodes = [w.samples[:, 0] for w in (f, g) if w.samples is not None]
    if nodes:
        extra = np.concatenate(nodes)
        x = np.union1d(x, extra[(extra >= a) & (extra <= b)])
    return x


def sup_distance_components(f: WarpFactor, g: WarpFactor, rng, n=20001) -> SupDistance:
    x = _dense_grid(f, g, rng, n)
    fv, gv = f(x), g(x)
    absolute = float(np.max(np.abs(fv - gv)))
    pos = (fv > 0) & (gv > 0)
    relative = float(np.max(np.abs(2 * np.log(fv[pos] / gv[pos])))) if np.any(pos) else 0.0
    return SupDistance(absolute, relative)


def sup_distance(f: WarpFactor, g: WarpFactor, rng, n=20001) -> float:
    """C^0 distance proxy: the larger of sup|f-g| and the relative coefficient distance."""
    return max(sup_distance_components(f, g, rng, n))


@dataclass(frozen=True)
class MetricSequence:
    members: tuple
    target: WarpFactor
    distances: tuple
    range: tuple
    eps: tuple = field(default=())

    def __post_init__(self):
        for m in self.members:
            if m.domain != self.target.domain:
                raise DomainMismatch("members must share the target domain")


def mollified_sequence(target: WarpFactor, eps_list, rng=None) -> MetricSequence:
    eps_list = tuple(float(e) for e in eps_list)
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise BadParams("eps_list must be decreasing")
    rng = tuple(rng or target.domain)
    members = tuple(mollify(target, e) for e in eps_list)
    dists = tuple(sup_distance(m, target, rng) for m in members)
    return MetricSequence(members, target, dists, rng, eps_list)


# --- isoperimetry -------------------------------------------------------------

class IsoperimetricEstimate(NamedTuple):
    value: float
    argmin: float
    below_floor: bool
    label: str = "radial-competitor estimate"


def isoperimetric_constant_radial(f: WarpFactor, rng, n=4001, floor=None) -> IsoperimetricEstimate:
    """inf over radial balls B_r, r in rng, of |dB_r|^{3/2} / |B_r|."""
    a, b = float(rng[0]), float(rng[1])
    lo, hi = f.domain
    if not a < b:
        raise EmptyRange(f"empty range {rng}")
    if not f.pole_closed:
        raise DomainMismatch("ball volumes need a pole-closed metric")
    if a < lo or b > hi:
        raise DomainMismatch(f"range {rng} not inside domain {f.domain}")
    x = np.linspace(lo, b, n)
    x = np.union1d(x, [a])
    area = 4 * np.pi * f(x) ** 2
    vol = cumulative_simpson(area * f.speed(x), x=x, initial=0.0)
    sel = (x >= a) & (vol > 0)
    ratio = area[sel] ** 1.5 / vol[sel]
    k = int(np.argmin(ratio))
    value = float(ratio[k])
    return IsoperimetricEstimate(value, float(x[sel][k]), floor is not None and value < floor)
