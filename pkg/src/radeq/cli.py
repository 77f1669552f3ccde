"""Command line entry point: ``radeq solve|reconstruct|compactlab|oracle|validate``."""

from __future__ import annotations

import json
import os
import sys
import time
from pathlib import Path
from typing import Optional

import click
import numpy as np

from . import compactlab as cl
from .config import RunConfig, config_schema, load_config
from .errors import ConfigInvalid, IoError, MissingField, OracleFailure, RadeqError
from .fields import ScalarField, read_field, write_binary, write_csv, write_vtk
from .geometry import build_sphere_quadrature
from .mc_oracle import equilibrium_score, simulate
from .solver import SolverConfig, solution_temperature, solve
from .transport import Discretization


def _dump_json(obj, path: Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


def _write_text(path: Path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


class Context:
    def __init__(self, cfg: RunConfig, out: Path):
        self.cfg = cfg
        self.out = out

    def write_effective(self) -> None:
        _dump_json(self.cfg.effective(), self.out / "effective_config.json")


def _prepare(config: Optional[str], out: str, threads, deterministic, seed) -> Context:
    cfg = load_config(config) if config else RunConfig()
    updates = {}
    if seed is not None:
        updates["seed"] = seed
    if threads is not None:
        updates["threads"] = threads
    elif cfg.threads is None:
        updates["threads"] = os.cpu_count() or 1
    if deterministic:
        updates["deterministic"] = True
    cfg = RunConfig.model_validate({**cfg.model_dump(), **updates})
    out_dir = Path(out)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoError(f"cannot create output directory {out_dir}: {exc}") from None
    ctx = Context(cfg, out_dir)
    ctx.write_effective()
    return ctx


def _run(fn):
    """Translate package errors into exit codes."""
    try:
        code = fn()
    except RadeqError as exc:
        click.echo(f"error: {type(exc).__name__}: {exc}", err=True)
        sys.exit(exc.exit_code)
    sys.exit(code or 0)


def _common(f):
    f = click.option("--seed", type=click.IntRange(0, 2**64 - 1), default=None,
                     help="RNG seed (overrides the config).")(f)
    f = click.option("--deterministic", is_flag=True, help="Record a fixed-order reduction request.")(f)
    f = click.option("--threads", type=click.IntRange(1, None), default=None, help="Worker threads.")(f)
    f = click.option("--out", type=click.Path(file_okay=False), default="out", show_default=True,
                     help="Output directory.")(f)
    f = click.option("--config", "config", type=click.Path(dir_okay=False), default=None,
                     help="TOML or JSON run configuration.")(f)
    return f


@click.group()
def main():
    """Radiative equilibrium solver and verification benches."""


# ---------------------------------------------------------------------------
# solve


def _write_field(field: ScalarField, stem: Path, formats) -> None:
    if "csv" in formats:
        write_csv(field, stem.with_suffix(".csv"))
    if "binary" in formats:
        write_binary(field, stem.with_suffix(".bin"))
    if "vtk" in formats:
        write_vtk(field, stem.with_suffix(".vtk"), name=stem.name)


def run_solve(ctx: Context):
    cfg = ctx.cfg
    domain = cfg.domain.build()
    model = cfg.model.build()
    scfg = cfg.solver.build(cfg.seed)
    disc = scfg.discretization(domain, model)
    u, report = solve(scfg, model, domain, disc=disc)
    T = solution_temperature(u, model, scfg, disc)
    _write_field(u, ctx.out / "u", cfg.outputs.formats)
    _write_field(T, ctx.out / "T", cfg.outputs.formats)
    _write_text(ctx.out / "report.json", report.to_json(sort_keys=True) + "\n")
    return u, T, report, disc, model, domain, scfg


@main.command("solve")
@_common
def cmd_solve(config, out, threads, deterministic, seed):
    """Solve the equilibrium problem; writes u.csv, T.csv and report.json."""

    def go():
        ctx = _prepare(config, out, threads, deterministic, seed)
        _, _, report, *_ = run_solve(ctx)
        click.echo(f"converged={report.converged} iterations={report.iterations} "
                   f"ratio={report.ratios[-1] if report.ratios else float('nan'):.6g}")
        return 0 if report.converged else 2

    _run(go)


# ---------------------------------------------------------------------------
# reconstruct


def _read_points(path: Path, default_nu: float) -> np.ndarray:
    try:
        data = np.loadtxt(path, delimiter=",", ndmin=2, comments="#",
                          skiprows=1 if _has_header(path) else 0)
    except OSError as exc:
        raise IoError(f"cannot read points file {path}: {exc}") from None
    if data.shape[1] == 6:
        data = np.hstack([data, np.full((len(data), 1), default_nu)])
    if data.shape[1] != 7:
        raise ConfigInvalid("points file needs columns x,y,z,nx,ny,nz[,nu]")
    return data


def _has_header(path: Path) -> bool:
    with open(path, encoding="utf-8") as fh:
        first = fh.readline()
    return any(c.isalpha() for c in first)


def run_reconstruct(ctx: Context, points: Optional[str], field: Optional[str]) -> Path:
    from .scattering import reconstruct_intensity_scatter
    from .transport import reconstruct_intensity

    cfg = ctx.cfg
    domain = cfg.domain.build()
    model = cfg.model.build()
    scfg = cfg.solver.build(cfg.seed)
    field = field or cfg.reconstruct.field
    points = points or cfg.reconstruct.points
    if not field:
        raise MissingField("no converged u field given (reconstruct.field or --field)")
    if not points:
        raise ConfigInvalid("no points file given (reconstruct.points or --points)")
    fpath = Path(field)
    if not fpath.exists():
        raise MissingField(f"field file {fpath} not found")
    u = read_field(fpath, domain)
    freq = model.frequency_quadrature(scfg.freq_panels, scfg.freq_per_panel) if scfg.pseudo else None
    quad = build_sphere_quadrature(scfg.sphere_order)
    disc = Discretization(domain, u.grid, quad, float(scfg.chord_step or u.grid.spacing), freq)
    rows = ["x,y,z,nx,ny,nz,nu,I"]
    for x0, x1, x2, n0, n1, n2, nu in _read_points(Path(points), cfg.reconstruct.nu):
        x = np.array([x0, x1, x2])
        n = np.array([n0, n1, n2])
        if scfg.full:
            val = reconstruct_intensity_scatter(u, model, disc, x, n, nu, scfg.collision, scfg.pseudo)
        else:
            val = reconstruct_intensity(u, model, disc, x, n, nu, scfg.pseudo)
        rows.append(",".join(f"{v:.17g}" for v in (x0, x1, x2, n0, n1, n2, nu, max(val, 0.0))))
    path = ctx.out / "intensity.csv"
    _write_text(path, "\n".join(rows) + "\n")
    return path


@main.command("reconstruct")
@_common
@click.option("--points", type=click.Path(dir_okay=False), default=None,
              help="CSV of x,y,z,nx,ny,nz[,nu] rows.")
@click.option("--field", type=click.Path(dir_okay=False), default=None, help="Converged u field file.")
def cmd_reconstruct(config, out, threads, deterministic, seed, points, field):
    """Evaluate the spectral intensity at phase-space points; writes intensity.csv."""

    def go():
        ctx = _prepare(config, out, threads, deterministic, seed)
        run_reconstruct(ctx, points, field)
        return 0

    _run(go)


# ---------------------------------------------------------------------------
# compactlab


def run_compactlab(ctx: Context) -> dict:
    c = ctx.cfg.compactlab
    seed = ctx.cfg.seed if ctx.cfg.seed is not None else 0
    fields = cl.random_band_limited(c.fields, N=c.N, L=c.L, band=c.band, seed=seed)
    d = np.asarray(c.h_direction, float)
    d = d / np.linalg.norm(d)
    hs = [r * d for r in c.h_norms]
    mb = cl.measure_bounds_scan(fields, c.kappas, c.Rs, order=c.measure_order, raise_on_violation=False)
    eq = cl.equiintegrability_scan(fields, c.ms, hs, order=c.sphere_order, raise_on_violation=False)
    report = {"seed": seed, "measure_bounds": {k: v for k, v in mb.items() if k != "rows"},
              "equiintegrability": {k: v for k, v in eq.items() if k != "rows"},
              "passed": bool(mb["passed"] and eq["passed"])}
    _dump_json(report, ctx.out / "compactlab.json")
    _write_text(ctx.out / "equiintegrability.csv",
                cl.rows_to_csv(eq["rows"], ["field", "h", "m", "lhs", "rhs", "margin", "margin_squared_form"]))
    _write_text(ctx.out / "measure_bounds.csv",
                cl.rows_to_csv(mb["rows"], ["field", "R", "kappa", "near", "near_bound", "far", "far_bound",
                                            "mu_total", "nu_max_total"]))
    return report


@main.command("compactlab")
@_common
def cmd_compactlab(config, out, threads, deterministic, seed):
    """Run the Fourier line-integral scans; exit 7 if a bound fails."""

    def go():
        ctx = _prepare(config, out, threads, deterministic, seed)
        rep = run_compactlab(ctx)
        click.echo(f"passed={rep['passed']}")
        return 0 if rep["passed"] else cl.BoundViolated.exit_code

    _run(go)


# ---------------------------------------------------------------------------
# oracle


def run_oracle(ctx: Context, T_path: Optional[str] = None) -> dict:
    cfg = ctx.cfg
    if cfg.seed is None:
        from .errors import SeedMissing
        raise SeedMissing("the oracle needs a seed (config seed or --seed)")
    domain = cfg.domain.build()
    model = cfg.model.build()
    if T_path:
        T = read_field(Path(T_path), domain)
    else:
        _, T, _, *_ = run_solve(ctx)
    t0 = time.perf_counter()
    tally = simulate(model, domain, T, cfg.mc_config())
    score = equilibrium_score(tally, model, T)
    tally.to_csv(ctx.out / "tally.csv")
    summary = {**tally.summary(), **score.to_dict(), "threshold": cfg.oracle.max_fraction_above_3,
               "runtime": time.perf_counter() - t0}
    summary["passed"] = bool(score.fraction_above_3 <= cfg.oracle.max_fraction_above_3
                             and score.fraction_reference_above_3 <= cfg.oracle.max_fraction_above_3)
    _dump_json(summary, ctx.out / "score.json")
    return summary


@main.command("oracle")
@_common
@click.option("--field", "T_path", type=click.Path(dir_okay=False), default=None,
              help="Temperature field to score; solved from the config when omitted.")
def cmd_oracle(config, out, threads, deterministic, seed, T_path):
    """Monte Carlo cross-check; exit 6 if too many cells fail the 3-sigma test."""

    def go():
        ctx = _prepare(config, out, threads, deterministic, seed)
        s = run_oracle(ctx, T_path)
        click.echo(f"passed={s['passed']} fraction_above_3={s['fraction_above_3']:.4g}")
        if not s["passed"]:
            raise OracleFailure("equilibrium score beyond threshold")
        return 0

    _run(go)


# ---------------------------------------------------------------------------
# validate


def run_validate(ctx: Context) -> dict:
    """Quick invariant suite on small grids."""
    from .geometry import ConvexDomain
    from .physics import (AngularShape, BoundaryInflux, BoundarySpectrum, CoefficientLaw,
                          RadiativeModel, stefan_integral)
    from .mc_oracle import McConfig

    checks = {}
    T = np.array([0.5, 1.0, 2.0, 4.0])
    sigma = RadiativeModel().constants.sigma
    checks["stefan_law"] = bool(np.all(np.abs(stefan_integral(T) / (sigma * T**4) - 1.0) <= 1e-9))

    dom = ConvexDomain.ball(1.0)
    m = RadiativeModel(alpha_a=CoefficientLaw.constant(1.0), alpha_s=CoefficientLaw.constant(0.5),
                       boundary=BoundaryInflux(BoundarySpectrum("planck", T0=1.0), AngularShape()))
    for mode in ("grey_absorption", "grey_full"):
        sc = SolverConfig(mode=mode, grid_n=9, sphere_order=4, initial_guess="constant",
                          initial_value=float(4 * np.pi * m.constants.sigma))
        sc.collision.tail_tolerance = 1e-10
        u, rep = solve(sc, m, dom)
        ref = 4 * np.pi * m.constants.sigma
        checks[f"closure_{mode}"] = bool(rep.iterations == 1 and
                                         np.max(np.abs(u.inside() - ref)) <= 1e-8 * ref)
        checks[f"contraction_{mode}"] = bool(all(r <= rep.contraction_bound + 0.05 for r in rep.ratios))

    f = cl.random_band_limited(2, N=16, band=4, seed=1)
    checks["compactlab"] = bool(cl.measure_bounds_scan(f, order=8, raise_on_violation=False)["passed"]
                                and cl.equiintegrability_scan(f, order=6, raise_on_violation=False)["passed"])
    g = BoundaryInflux(BoundarySpectrum("exponential"), AngularShape())
    mi = RadiativeModel(boundary=g)
    sc = SolverConfig(grid_n=9, sphere_order=4)
    u, _ = solve(sc, mi, dom)
    Tf = solution_temperature(u, mi, sc, sc.discretization(dom, mi))
    tally = simulate(mi, dom, Tf, McConfig(photons=50_000, seed=ctx.cfg.seed or 0, tally_n=4))
    checks["oracle_equilibrium"] = bool(equilibrium_score(tally).fraction_above_3 <= 0.05)
    result = {"checks": checks, "passed": bool(all(checks.values()))}
    _dump_json(result, ctx.out / "validate.json")
    return result


@main.command("validate")
@_common
def cmd_validate(config, out, threads, deterministic, seed):
    """Run a fast invariant suite and report pass/fail per check."""

    def go():
        ctx = _prepare(config, out, threads, deterministic, seed)
        res = run_validate(ctx)
        for name, ok in res["checks"].items():
            click.echo(f"{'PASS' if ok else 'FAIL'} {name}")
        return 0 if res["passed"] else 1

    _run(go)


@main.command("schema")
def cmd_schema():
    """Print the JSON schema of the run configuration."""
    click.echo(json.dumps(config_schema(), indent=2, sort_keys=True))


if __name__ == "__main__":
    main()
