"""End-to-end experiments: criterion pipeline, stability under mollification, equivalence sweep."""
from __future__ import annotations

import dataclasses
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import __version__
from ..errors import BadParams, CertificationFailed, ImcfError, Inconclusive
from ..geometry import (WarpFactor, from_json, isoperimetric_constant_radial, mean_curvature,
                        mollify, scalar_curvature, sup_distance)
from ..hawking import (FOUR_PI, CriterionReport, HawkingTrace, bulk_integral, criterion,
                       hawking_trace, recover_scalar_at_pole, recover_scalar_on_sphere,
                       swept_min_scal)
from ..radial_flow import FlowSolution, level_radius, solve_weak_imcf
from ..variational import PhiBubble, phi_bubble_check, phi_construct, phi_minimizer, phi_willmore
from . import io
from .presets import preset, random_scalar_profile

DEFAULT_TOLERANCES = {"criterion": 1e-6, "scal": 1e-9, "stability": 1e-5, "recovery": 1e-2}


@dataclass
class ExperimentConfig:
    """Inputs of one experiment.

    ``metric`` is either ``{"preset": name, "params": {...}}`` or a serialized warp factor.
    """

    metric: dict = field(default_factory=lambda: {"preset": "euclidean"})
    r_init: float = 1.0
    t_max: float = 2.0
    grid_n: int = 4096
    n_samples: int = 1001
    p_list: tuple = (1.5, 1.2, 1.1, 1.05, 1.01)
    eps_list: tuple = (0.2, 0.1, 0.05, 0.025)
    tolerances: dict = field(default_factory=lambda: dict(DEFAULT_TOLERANCES))
    boundary: str = "auto"
    collar: float | None = None
    out: str | None = None
    seed: int = 0

    def __post_init__(self):
        self.tolerances = {**DEFAULT_TOLERANCES, **dict(self.tolerances)}
        self.p_list = tuple(float(p) for p in self.p_list)
        self.eps_list = tuple(float(e) for e in self.eps_list)
        if any(not v > 0 for v in self.tolerances.values()):
            raise BadParams("all tolerances must be positive")
        if self.grid_n < 64:
            raise BadParams("grid_n must be at least 64")
        if any(b >= a for a, b in zip(self.eps_list, self.eps_list[1:])):
            raise BadParams("eps_list must be decreasing")
        if self.boundary not in ("auto", "bubble", "classical"):
            raise BadParams("boundary must be auto, bubble or classical")
        if not self.t_max > 0:
            raise BadParams("t_max must be positive")

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(doc) - names
        if unknown:
            raise BadParams(f"unknown config keys {sorted(unknown)}")
        return cls(**doc)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def warp(self) -> WarpFactor:
        return build_metric(self.metric)


def build_metric(source) -> WarpFactor:
    if isinstance(source, WarpFactor):
        return source
    if isinstance(source, str):
        return preset(source)
    if "preset" in source and "kind" not in source:
        return preset(source["preset"], source.get("params"))
    return from_json(source)


def _out_dir(config):
    if config.out is None:
        return None
    path = Path(config.out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def write_manifest(path: Path, kind: str, config: ExperimentConfig, f: WarpFactor, extra=None):
    doc = {"experiment": kind, "metric_digest": f.digest(), "metric": f.to_json(),
           "config": {k: v for k, v in config.to_dict().items() if k != "out"}, "grid_n": config.grid_n, "tolerances": config.tolerances,
           "versions": {**io.versions(), "imcflab": __version__},
           "module_parameters": {"gauss_legendre_nodes": 10, "level_rtol": 1e-13,
                                 "bubble_grid_n": 4000}}
    if extra:
        doc.update(extra)
    io.write_json(path / "manifest.json", doc)


# --- criterion pipeline -----------------------------------------------------------

@dataclass(frozen=True)
class CriterionRun:
    report: CriterionReport
    trace: HawkingTrace
    flow: FlowSolution
    boundary_source: str
    bubble: PhiBubble | None


def boundary_willmore(f: WarpFactor, r_init: float, mode: str = "auto", collar=None):
    """(Willmore value of the initial boundary, source label, bubble or None)."""
    if mode in ("auto", "bubble"):
        try:
            bubble = phi_construct(f, r_init, collar=collar)
            return phi_willmore(f, bubble), "phi-bubble", bubble
        except ImcfError:
            if mode == "bubble":
                raise
    H = float(mean_curvature(f, r_init))
    return FOUR_PI * float(f(r_init)) ** 2 * H * H, "classical", None


def criterion_pipeline(f: WarpFactor, r_init: float, t_max: float, grid_n: int, n_samples: int,
                       tolerance: float, boundary=("auto", None)) -> CriterionRun:
    if isinstance(boundary[0], str):
        W, source, bubble = boundary_willmore(f, r_init, *boundary)
    else:
        W, source, bubble = boundary
    sol = solve_weak_imcf(f, r_init, grid_n)
    times = np.linspace(0.0, t_max, n_samples)
    report = criterion(sol, f, W, times, tolerance)
    return CriterionRun(report, hawking_trace(sol, f, times), sol, source, bubble)


def run_criterion(config: ExperimentConfig) -> CriterionRun:
    f = config.warp()
    run = criterion_pipeline(f, config.r_init, config.t_max, config.grid_n, config.n_samples,
                             config.tolerances["criterion"], (config.boundary, config.collar))
    out = _out_dir(config)
    if out is not None:
        run.flow.to_csv(out / "flow.csv")
        run.trace.to_csv(out / "trace.csv")
        run.report.to_csv(out / "criterion.csv")
        doc = run.report.to_json(f.digest())
        doc["boundary_source"] = run.boundary_source
        doc["bubble"] = None if run.bubble is None else run.bubble.to_json()
        io.write_json(out / "report.json", doc)
        write_manifest(out, "criterion", config, f)
    return run


# --- stability --------------------------------------------------------------------

@dataclass(frozen=True)
class MemberResult:
    eps: float
    report: CriterionReport
    boundary_radius: float
    willmore: float
    bulk: float
    min_scal: float
    isoperimetric: float
    sup_distance: float


@dataclass(frozen=True)
class StabilityReport:
    members: tuple
    target: MemberResult
    sup_distances: tuple
    willmore: tuple
    willmore_limit: float
    bulk: tuple
    bulk_limit: float
    min_isoperimetric: float
    checks: dict
    tolerance: float

    @property
    def verdict(self) -> str:
        return "pass" if all(self.checks.values()) else "fail"

    def to_json(self) -> dict:
        return {"verdict": self.verdict, "checks": self.checks, "tolerance": self.tolerance,
                "eps": [m.eps for m in self.members],
                "member_verdicts": [m.report.verdict for m in self.members],
                "member_min_margin": [m.report.min_margin for m in self.members],
                "member_min_scal": [m.min_scal for m in self.members],
                "sup_distances": list(self.sup_distances), "willmore": list(self.willmore),
                "willmore_limit": self.willmore_limit, "target_willmore": self.target.willmore,
                "bulk": list(self.bulk), "bulk_limit": self.bulk_limit,
                "target_bulk": self.target.bulk, "target_verdict": self.target.report.verdict,
                "target_min_margin": self.target.report.min_margin,
                "min_isoperimetric_radial": self.min_isoperimetric,
                "isoperimetric_label": "radial-competitor estimate"}

    def to_csv(self, path):
        rows = [(m.eps, m.sup_distance, m.boundary_radius, m.willmore, m.bulk, m.min_scal,
                 m.isoperimetric, m.report.min_margin, m.report.verdict)
                for m in self.members + (self.target,)]
        io.write_table(path, ["eps", "sup_distance", "boundary_radius", "willmore", "bulk",
                              "min_scal", "isoperimetric_radial", "min_margin", "verdict"], rows)


def _run_member(f, bubble, eps, config, gate, dist):
    E = phi_minimizer(f, bubble)
    own = PhiBubble(bubble.phi_r, bubble.phi_values, bubble.U1_radius, E, bubble.U2_radius,
                    kink=bool(np.any(np.isclose(f.kinks, E, rtol=0, atol=1e-12))))
    cert = phi_bubble_check(f, own)
    own = dataclasses.replace(own, certificate=cert)
    W = phi_willmore(f, own)
    sol = solve_weak_imcf(f, E, config.grid_n)
    min_scal = swept_min_scal(sol, f, config.t_max)
    if gate and min_scal < -config.tolerances["scal"]:
        raise Inconclusive(eps, f"Scal={min_scal:.3e} < 0 on the swept region")
    times = np.linspace(0.0, config.t_max, config.n_samples)
    report = criterion(sol, f, W, times, config.tolerances["criterion"])
    bulk = float(bulk_integral(sol, f, config.t_max))
    iso = np.nan
    if f.pole_closed:
        r_end = float(level_radius(sol, config.t_max, exact=True))
        iso = isoperimetric_constant_radial(f, (0.05 * E, r_end)).value
    return MemberResult(eps, report, E, W, bulk, min_scal, float(iso), dist)


def _extrapolate(eps, values):
    """Limit eps -> 0 assuming first-order convergence, from the two finest members."""
    (e1, v1), (e2, v2) = (eps[-2], values[-2]), (eps[-1], values[-1])
    return float(v2 + (v2 - v1) * e2 / (e1 - e2))


def _common_bubble(members, target, config, max_doublings=8):
    """phi built on the finest member, steepened until every metric has an interior minimizer."""
    margin = 1.0
    for _ in range(max_doublings + 1):
        bubble = phi_construct(members[-1], config.r_init, collar=config.collar,
                               slope_margin=margin)
        try:
            for m in (*members, target):
                phi_minimizer(m, bubble)
            return bubble
        except CertificationFailed:
            margin *= 2
    raise CertificationFailed("no common phi keeps all minimizers inside the collar")


def run_stability(config: ExperimentConfig) -> StabilityReport:
    """Mollify the target along eps_list and compare member and target pipelines.

    One phi, built on the finest member, is shared by every member and the target.
    """
    if len(config.eps_list) < 2:
        raise BadParams("stability needs at least two eps values")
    target = config.warp()
    tol = config.tolerances["stability"]
    members = [mollify(target, e) for e in config.eps_list]
    rng = (target.domain[0], min(target.domain[1], 2 * config.r_init + 10))
    dists = [sup_distance(m, target, rng) for m in members]
    bubble = _common_bubble(members, target, config)

    with ThreadPoolExecutor() as pool:
        futures = [pool.submit(_run_member, m, bubble, e, config, True, d)
                   for m, e, d in zip(members, config.eps_list, dists)]
        fut_target = pool.submit(_run_member, target, bubble, 0.0, config, False, 0.0)
        results = [fu.result() for fu in futures]
        tgt = fut_target.result()

    eps = config.eps_list
    W = tuple(m.willmore for m in results)
    diffs = np.abs(np.diff(W))
    bulk = tuple(m.bulk for m in results)
    W_lim = _extrapolate(eps, W)
    bulk_lim = _extrapolate(eps, bulk)
    checks = {
        "members_pass": all(m.report.passed for m in results),
        "willmore_converges": bool(np.all(diffs[1:] <= diffs[:-1] + tol))
        and abs(W_lim - tgt.willmore) <= tol * (1 + abs(tgt.willmore)),
        "bulk_lower_semicontinuous": bulk_lim >= tgt.bulk - tol * (1 + abs(tgt.bulk)),
        "target_pass": tgt.report.min_margin >= -tol,
        "distances_nonincreasing": all(b <= a + 1e-12 for a, b in zip(dists, dists[1:])),
    }
    checks = {k: bool(v) for k, v in checks.items()}
    iso = [m.isoperimetric for m in results if np.isfinite(m.isoperimetric)]
    report = StabilityReport(tuple(results), tgt, tuple(dists), W, W_lim, bulk, bulk_lim,
                             float(min(iso)) if iso else float("nan"), checks, tol)
    out = _out_dir(config)
    if out is not None:
        report.to_csv(out / "stability.csv")
        io.write_json(out / "report.json", report.to_json())
        write_manifest(out, "stability", config, target, {"bubble": bubble.to_json()})
    return report


# --- equivalence sweep -----------------------------------------------------------

EQUIVALENCE_FAMILY = (("euclidean", {}, 1.0), ("schwarzschild", {}, 3.0), ("hyperbolic", {}, 1.0))


@dataclass(frozen=True)
class EquivalenceRow:
    metric: str
    min_scal: float
    verdict: str
    expected: str
    recovered: float
    actual: float

    @property
    def agrees(self) -> bool:
        return self.verdict == self.expected

    @property
    def recovery_ok(self) -> bool:
        return abs(self.recovered - self.actual) <= 1e-2 * (1 + abs(self.actual))


@dataclass(frozen=True)
class EquivalenceReport:
    rows: tuple

    @property
    def verdict(self) -> str:
        return "pass" if all(r.agrees and r.recovery_ok for r in self.rows) else "fail"

    def to_csv(self, path):
        io.write_table(path, ["metric", "min_scal", "verdict", "expected", "recovered_scal",
                              "actual_scal", "agrees", "recovery_ok"],
                       [(r.metric, r.min_scal, r.verdict, r.expected, r.recovered, r.actual,
                         int(r.agrees), int(r.recovery_ok)) for r in self.rows])


def _actual_scal(f: WarpFactor, where: float) -> float:
    if f.params.get("preset") == "random_nonneg_scal":
        return float(random_scalar_profile(f.params)(where))
    # off the pole: the closed form cancels catastrophically at r -> 0
    return float(scalar_curvature(f, max(where, 1e-2) if f.pole_closed else where))


def equivalence_row(name, f, r_init, t_max, grid_n, n_samples, tol_crit, tol_scal):
    run = criterion_pipeline(f, r_init, t_max, grid_n, n_samples, tol_crit, ("classical", None))
    min_scal = swept_min_scal(run.flow, f, t_max)
    if f.pole_closed:
        recovered, actual = recover_scalar_at_pole(f), _actual_scal(f, 0.0)
    else:
        recovered, actual = recover_scalar_on_sphere(f, r_init), _actual_scal(f, r_init)
    expected = "pass" if min_scal >= -tol_scal else "fail"
    return EquivalenceRow(name, min_scal, run.report.verdict, expected, recovered, actual)


def run_equivalence(config: ExperimentConfig, n_random: int = 10,
                    random_r_init: float = 0.5) -> EquivalenceReport:
    jobs = [(name, preset(name, params), r0) for name, params, r0 in EQUIVALENCE_FAMILY]
    jobs += [(f"random_nonneg_scal[{config.seed + k}]",
              preset("random_nonneg_scal", {"seed": config.seed + k}), random_r_init)
             for k in range(n_random)]
    tc, ts = config.tolerances["criterion"], config.tolerances["scal"]
    with ThreadPoolExecutor() as pool:
        rows = list(pool.map(lambda j: equivalence_row(j[0], j[1], j[2], config.t_max,
                                                       config.grid_n, config.n_samples, tc, ts),
                             jobs))
    report = EquivalenceReport(tuple(rows))
    out = _out_dir(config)
    if out is not None:
        report.to_csv(out / "equivalence.csv")
        io.write_json(out / "report.json", {"verdict": report.verdict,
                                            "rows": [dataclasses.asdict(r) for r in rows]})
        write_manifest(out, "equivalence", config, jobs[0][1],
                       {"family": [j[0] for j in jobs],
                        "digests": {j[0]: j[1].digest() for j in jobs}})
    return report
