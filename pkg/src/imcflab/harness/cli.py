"""Command line entry point. Exit codes: 0 pass, 1 fail, 2 inconclusive, 3 error."""
from __future__ import annotations

import functools
import sys
from pathlib import Path

import click
import numpy as np

from ..errors import ImcfError, Inconclusive
from ..p_approx import p_limit
from ..radial_flow import solve_weak_imcf
from . import io
from .experiments import (ExperimentConfig, run_criterion, run_equivalence, run_stability,
                          write_manifest)
from .validate import run_all

PASS, FAIL, INCONCLUSIVE, ERROR = 0, 1, 2, 3

# per-command defaults applied when neither --config nor a flag sets the field
_DEFAULTS = {
    "stability": {"metric": {"preset": "cone_glue"}, "r_init": 0.9, "collar": 0.05},
    "pflow": {"grid_n": 20000},
}


def common_options(fn):
    options = [
        click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
                     help="JSON experiment config."),
        click.option("--metric", help="Preset name."),
        click.option("--r0", type=float, help="Initial radius."),
        click.option("--tmax", type=float, help="Final flow time."),
        click.option("--grid", type=int, help="Number of grid cells."),
        click.option("--out", type=click.Path(file_okay=False), help="Output directory."),
        click.option("--seed", type=int, help="Seed for randomized parts."),
        click.option("--tol", type=float, help="Criterion tolerance."),
    ]
    for opt in reversed(options):
        fn = opt(fn)
    return fn


def build_config(command, config_path, metric, r0, tmax, grid, out, seed, tol) -> ExperimentConfig:
    doc = dict(_DEFAULTS.get(command, {}))
    if config_path:
        doc.update(ExperimentConfig.load(config_path).to_dict())
    flags = {"metric": None if metric is None else {"preset": metric}, "r_init": r0,
             "t_max": tmax, "grid_n": grid, "out": out, "seed": seed}
    doc.update({k: v for k, v in flags.items() if v is not None})
    if tol is not None:
        doc["tolerances"] = {**doc.get("tolerances", {}), "criterion": tol}
    return ExperimentConfig.from_dict(doc)


def guarded(fn):
    """Map library exceptions onto exit codes."""
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            code = fn(*args, **kwargs)
        except Inconclusive as exc:
            click.echo(f"inconclusive: {exc}", err=True)
            code = INCONCLUSIVE
        except (ImcfError, OSError, ValueError) as exc:
            click.echo(f"error: {type(exc).__name__}: {exc}", err=True)
            code = ERROR
        sys.exit(code)
    return wrapper


def _verdict(passed: bool) -> int:
    click.echo("verdict: " + ("pass" if passed else "fail"))
    return PASS if passed else FAIL


@click.group()
def main():
    """Radial weak inverse mean curvature flow experiments."""


@main.command()
@common_options
@guarded
def flow(config_path, metric, r0, tmax, grid, out, seed, tol):
    """Solve the weak flow and write flow.csv."""
    config = build_config("flow", config_path, metric, r0, tmax, grid, out, seed, tol)
    f = config.warp()
    sol = solve_weak_imcf(f, config.r_init, config.grid_n)
    if config.out:
        path = Path(config.out)
        path.mkdir(parents=True, exist_ok=True)
        sol.to_csv(path / "flow.csv")
        write_manifest(path, "flow", config, f)
    click.echo(f"r_hull: {io.fmt(sol.r_hull_exact)}")
    click.echo(f"jumps: {len(sol.jumps)}")
    return PASS


@main.command("criterion")
@common_options
@guarded
def criterion_cmd(config_path, metric, r0, tmax, grid, out, seed, tol):
    """Evaluate the monotonicity criterion along the flow."""
    config = build_config("criterion", config_path, metric, r0, tmax, grid, out, seed, tol)
    run = run_criterion(config)
    click.echo(f"min_margin: {io.fmt(run.report.min_margin)}")
    click.echo(f"boundary: {run.boundary_source}")
    return _verdict(run.report.passed)


@main.command()
@common_options
@guarded
def equivalence(config_path, metric, r0, tmax, grid, out, seed, tol):
    """Criterion verdict against the sign of scalar curvature over a preset family."""
    config = build_config("equivalence", config_path, metric, r0, tmax, grid, out, seed, tol)
    report = run_equivalence(config)
    for row in report.rows:
        click.echo(f"{row.metric}: min_scal={io.fmt(row.min_scal)} verdict={row.verdict} "
                   f"recovered={io.fmt(row.recovered)} actual={io.fmt(row.actual)}")
    return _verdict(report.verdict == "pass")


@main.command()
@common_options
@guarded
def stability(config_path, metric, r0, tmax, grid, out, seed, tol):
    """Criterion under mollification of a low-regularity target."""
    config = build_config("stability", config_path, metric, r0, tmax, grid, out, seed, tol)
    report = run_stability(config)
    for name, ok in report.checks.items():
        click.echo(f"{name}: {'ok' if ok else 'FAILED'}")
    return _verdict(report.verdict == "pass")


@main.command()
@common_options
@click.option("--K", "annulus", nargs=2, type=float, help="Annulus for the oscillation bound.")
@guarded
def pflow(config_path, metric, r0, tmax, grid, out, seed, tol, annulus):
    """p-harmonic approximations and their distance to the weak flow."""
    config = build_config("pflow", config_path, metric, r0, tmax, grid, out, seed, tol)
    f = config.warp()
    r_init = config.r_init
    rng = (np.e * r_init, np.e**2 * r_init)
    K = tuple(annulus) if annulus else (2 * r_init, 3 * r_init)
    report = p_limit(f, r_init, config.p_list, rng, grid_n=config.grid_n, K=K)
    if config.out:
        path = Path(config.out)
        path.mkdir(parents=True, exist_ok=True)
        io.write_table(path / "pflow.csv", ["p", "sup_distance", "osc_K"],
                       zip(report.p_list, report.distances, report.oscillations))
        io.write_json(path / "report.json",
                      {"nonincreasing": report.nonincreasing, "range": list(rng), "K": list(K),
                       "richardson_distance": report.richardson_distance})
        write_manifest(path, "pflow", config, f)
    for p, d in zip(report.p_list, report.distances):
        click.echo(f"p={io.fmt(p)} distance={io.fmt(d)}")
    return _verdict(report.nonincreasing)


@main.command()
@guarded
def validate():
    """Run the invariant suite."""
    ok = True
    for name, passed, detail in run_all():
        click.echo(f"{'PASS' if passed else 'FAIL'} {name}: {detail}")
        ok &= passed
    return _verdict(ok)


if __name__ == "__main__":
    main()
