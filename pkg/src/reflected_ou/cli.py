"""Command line entry point: ``reflected-ou <command> [--config ...] [--seed ...]``.

Exit status: 0 all checks pass, 1 a check failed, 2 configuration error, 3 solver error.
"""

from __future__ import annotations

import argparse
import json
import os
import platform
import sys
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from importlib import metadata
from pathlib import Path

import numpy as np

from . import catalog
from .config import RunConfig, load_config
from .errors import ConfigError, SolverError
from .reports import ResidualReport, _clean

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2, 3


# ------------------------------------------------------------------ file output
def write_atomic(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    with os.fdopen(fd, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)
    return path


def dump_json(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n"


def write_table(path: Path, header: list[str], rows: np.ndarray) -> Path:
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    lines = [",".join(header)] + [",".join(f"{v:.17g}" for v in row) for row in rows]
    return write_atomic(path, "\n".join(lines) + "\n")


def versions() -> dict:
    out = {"python": platform.python_version()}
    for pkg in ("numpy", "scipy", "pydantic"):
        try:
            out[pkg] = metadata.version(pkg)
        except metadata.PackageNotFoundError:  # pragma: no cover
            out[pkg] = None
    try:
        out["package"] = metadata.version("artifact")
    except metadata.PackageNotFoundError:  # pragma: no cover
        out["package"] = None
    return out


# ------------------------------------------------------------------ suite runner
def _plan(cfg: RunConfig, suite_name: str | None):
    specs = catalog.suite(suite_name) if suite_name else list(cfg.suite)
    plan = []
    for i, spec in enumerate(specs):
        entry = catalog.REGISTRY.get(spec.check)
        if entry is None:
            raise ConfigError(f"suite[{i}].check: unknown check {spec.check!r}")
        params = catalog.resolve_params(entry, spec.params, where=f"suite[{i}].params")
        raw = {**entry.defaults, **spec.params}
        plan.append((i, entry, params, raw, catalog.check_seed(cfg.seed, entry.name, i)))
    return plan


def run_suite(cfg: RunConfig, out: Path, suite_name: str | None = None, jobs: int | None = None,
              echo=print) -> int:
    """Run the configured (or named) suite, write artifacts, return the exit status."""
    jobs = int(jobs or cfg.jobs)
    plan = _plan(cfg, suite_name)
    inner = jobs if len(plan) <= 1 else 1
    start = time.perf_counter()

    def work(item):
        i, entry, params, raw, seed = item
        t0 = time.perf_counter()
        ctx = catalog.CheckContext(cfg, seed, inner)
        try:
            res = entry.runner(ctx, params)
            reports, tables, error = res.reports, res.tables, None
        except SolverError as exc:
            reports, tables, error = [], {}, {"type": type(exc).__name__, "message": str(exc)}
        record = {"index": i, "check": entry.name, "anchor": entry.anchor, "seed": seed,
                  "reports": [r.to_dict() for r in reports], "error": error,
                  "passed": error is None and all(r.passed for r in reports)}
        stem = f"{i:02d}_{entry.name}"
        write_atomic(out / "checks" / f"{stem}.json", dump_json(record))
        files = [str(write_table(out / "data" / f"{stem}_{k}.csv", h, rows).relative_to(out))
                 for k, (h, rows) in sorted(tables.items())]
        timing = {"index": i, "check": entry.name, "seed": seed, "params": raw, "wall_time": time.perf_counter() - t0,
                  "tables": files}
        return record, reports, timing

    if jobs > 1 and len(plan) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(work, plan))
    else:
        results = [work(item) for item in plan]

    records = [r for r, _, _ in results]
    write_atomic(out / "reports.json", dump_json(records))
    manifest = {
        "command": "verify",
        "suite": suite_name,
        "config": cfg.model_dump(mode="json"),
        "seed": cfg.seed,
        "jobs": jobs,
        "versions": versions(),
        "checks": [t for _, _, t in results],
        "wall_time": time.perf_counter() - start,
    }
    write_atomic(out / "manifest.json", dump_json(manifest))
    for rec, reps, t in results:
        if rec["error"]:
            echo(f"ERROR {rec['check']}: {rec['error']['type']}: {rec['error']['message']}")
        for r in reps:
            echo(r.line())
    nrep = sum(len(r["reports"]) for r in records)
    nfail = sum(1 for r in records for x in r["reports"] if not x["passed"])
    nerr = sum(1 for r in records if r["error"])
    echo(f"{len(records)} checks, {nrep} reports, {nfail} failed, {nerr} solver errors")
    if nerr:
        return EXIT_SOLVER
    return EXIT_FAIL if nfail else EXIT_OK


# ------------------------------------------------------------------ other commands
def _manifest(cfg: RunConfig, command: str, jobs: int, extra: dict, start: float) -> dict:
    return {"command": command, "config": cfg.model_dump(mode="json"), "seed": cfg.seed, "jobs": jobs,
            "versions": versions(), "wall_time": time.perf_counter() - start, **extra}


def cmd_simulate(cfg: RunConfig, out: Path, jobs: int, echo=print) -> int:
    from .sde import Scheme, simulate

    start = time.perf_counter()
    model, body = cfg.build_model(), cfg.build_body()
    sc = cfg.scheme
    x0 = np.zeros(model.dim) if sc.x0 is None else np.asarray(sc.x0, dtype=float)
    if x0.shape != (model.dim,):
        raise ConfigError(f"scheme.x0: need {model.dim} components")
    schemes = [Scheme.projected()] if sc.kind == "projected" else [Scheme.penalized(e) for e in sc.eps]
    files = []
    for k, scheme in enumerate(schemes):
        ens = simulate(model, body, scheme, x0, sc.T, sc.h, sc.paths, cfg.seed, stride=sc.stride, jobs=jobs)
        stem = "projected" if scheme.kind == "projected" else f"penalized_{k}"
        csv, man = ens.write(out / "data", stem)
        files += [str(csv.relative_to(out)), str(man.relative_to(out))]
        final = ens.states[:, -1, :]
        echo(f"{stem}: {ens.paths} paths to T={ens.horizon:g}; mean |x_T| = {np.linalg.norm(final, axis=1).mean():.4g}; "
             f"outside K at T: {float(np.mean(~np.asarray(body.contains(final)))):.3g}")
    write_atomic(out / "reports.json", dump_json([]))
    write_atomic(out / "manifest.json", dump_json(_manifest(cfg, "simulate", jobs, {"files": files}, start)))
    return EXIT_OK


def cmd_resolvent(cfg: RunConfig, out: Path, jobs: int, echo=print) -> int:
    from .resolvent import GridConfig, GridOperator, feynman_kac, grid_solve, neumann_limit

    start = time.perf_counter()
    model, body = cfg.build_model(), cfg.build_body()
    rs = cfg.resolvent
    f = rs.f.build_one(model.dim)
    grid = GridConfig(nodes=rs.grid_nodes)
    eps = rs.eps if rs.eps is not None else cfg.scheme.eps[-1]
    results, files = [], []
    if rs.method == "grid":
        sol = grid_solve(model, body, eps, rs.lam, f, grid)
        files.append(str(sol.write_csv(out / "data" / "resolvent_grid.csv").relative_to(out)))
        results.append({"method": "grid", **sol.describe()})
        echo(f"grid solve: {int(sol.operator.active.sum())} nodes, backward error {sol.residual:.2e}")
    elif rs.method == "neumann":
        sols = []
        op = None
        for e in cfg.scheme.eps:
            op = GridOperator(model, body, e, grid)
            sols.append(grid_solve(model, body, e, rs.lam, f, grid, operator=op))
        lim = neumann_limit(sols)
        direct = grid_solve(model, body, None, rs.lam, f, grid)
        rows = np.column_stack([lim.points, lim.finest, lim.extrapolated, direct.nodal])
        files.append(str(write_table(out / "data" / "neumann_limit.csv",
                                     ["x1", "finest", "extrapolated", "neumann_direct"], rows).relative_to(out)))
        results.append({"method": "neumann", **lim.to_dict()})
        echo(f"increments {['%.3g' % v for v in lim.increments]}; extrapolation change {lim.extrapolation_change:.2e}")
    else:
        pts = np.atleast_2d(rs.points if rs.points is not None else np.zeros((1, model.dim)))
        rows = []
        for i, x in enumerate(pts):
            est = feynman_kac(model, body, eps, rs.lam, f, x, cfg.scheme.paths, cfg.seed + i, h=cfg.scheme.h,
                              target_tol=rs.target_tol, f_sup=f.sup_abs, jobs=jobs)
            results.append(est.to_dict())
            rows.append([*x, est.value, est.std_error])
            echo(f"x={x.tolist()}: {est.value:.6g} +- {est.std_error:.2g}")
        cols = [f"x{k + 1}" for k in range(model.dim)] + ["value", "std_error"]
        files.append(str(write_table(out / "data" / "resolvent_mc.csv", cols, np.asarray(rows)).relative_to(out)))
    write_atomic(out / "reports.json", dump_json([]))
    write_atomic(out / "results.json", dump_json(results))
    write_atomic(out / "manifest.json", dump_json(_manifest(cfg, "resolvent", jobs, {"files": files}, start)))
    return EXIT_OK


def _finish(cfg, out, command, jobs, reports: list[ResidualReport], files, start, echo) -> int:
    write_atomic(out / "reports.json", dump_json([r.to_dict() for r in reports]))
    write_atomic(out / "manifest.json", dump_json(_manifest(cfg, command, jobs, {"files": files}, start)))
    for r in reports:
        echo(r.line())
    return EXIT_OK if all(r.passed for r in reports) else EXIT_FAIL


def cmd_surface(cfg: RunConfig, out: Path, jobs: int, echo=print) -> int:
    from .surface import coarea_check, pushforward_density, sigma_curve

    start = time.perf_counter()
    model, body = cfg.build_model(), cfg.build_body()
    ss = cfg.surface
    g = ss.level.build(model.dim, body)
    f = ss.f.build_one(model.dim)
    est = cfg.estimator
    kind = est.method
    rs = np.asarray(ss.r, dtype=float)
    curve = sigma_curve(model, g, rs, kind=kind, h_shell=est.h_shell, samples=est.samples, seed=cfg.seed)
    files = [str(write_table(out / "data" / "sigma_curve.csv", ["r", "value", "std_error"], curve).relative_to(out))]
    r_max = ss.r_max if ss.r_max is not None else 40.0 * float(model.lambdas.max())
    reports = [coarea_check(model, g, f, r_max, kind=kind, samples=est.samples, seed=cfg.seed)]
    if ss.density:
        dens = pushforward_density(model, g, rs, h_shell=est.h_shell, samples=est.samples, seed=cfg.seed)
        rows = np.column_stack([rs, [d.value for d in dens], [d.std_error for d in dens]])
        files.append(str(write_table(out / "data" / "density.csv", ["r", "value", "std_error"], rows).relative_to(out)))
    return _finish(cfg, out, "surface", jobs, reports, files, start, echo)


def cmd_perturb(cfg: RunConfig, out: Path, jobs: int, echo=print) -> int:
    from .perturb import invariant_density, perturbed_resolvent, series_reports
    from .reports import flag_report
    from .resolvent import GridConfig

    start = time.perf_counter()
    model, body = cfg.build_model(), cfg.build_body()
    ps = cfg.perturb
    drift = ps.drift.build(model.dim)
    grid = GridConfig(nodes=ps.grid_nodes)
    res = perturbed_resolvent(model, body, drift, ps.lam, ps.f.build_one(model.dim), grid)
    params = {"drift": drift.describe(), "lambda": ps.lam}
    reports = series_reports(res, params)
    cols = [f"x{k + 1}" for k in range(model.dim)] + ["series", "direct"]
    files = [str(write_table(out / "data" / "perturbed_resolvent.csv", cols,
                             np.column_stack([res.points, res.values, res.direct])).relative_to(out))]
    if model.dim == 1:
        dens = invariant_density(model, body, drift, grid)
        reports.append(flag_report("invariant_density/nonnegative", bool(dens.density.min() >= 0), params))
        reports.append(ResidualReport("invariant_density/adjoint_residual", dens.residual, 0.0, 0.0, 1e-8,
                                      params=params, extras=dens.to_dict()))
        files.append(str(write_table(out / "data" / "invariant_density.csv", ["x1", "density"],
                                     np.column_stack([dens.points, dens.density])).relative_to(out)))
    return _finish(cfg, out, "perturb", jobs, reports, files, start, echo)


def cmd_list(echo=print, as_json: bool = False) -> int:
    rows = catalog.catalog_rows()
    if as_json:
        echo(json.dumps({"checks": rows, "suites": list(catalog.SUITES)}, indent=2))
        return EXIT_OK
    w = max(len(r["check"]) for r in rows)
    for r in rows:
        echo(f"{r['check']:<{w}}  {r['anchor']:<10}  {r['tolerance']}")
    echo(f"{len(rows)} checks; suites: {', '.join(catalog.SUITES)}")
    return EXIT_OK


# ------------------------------------------------------------------ argparse
def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON run configuration")
    common.add_argument("--seed", type=int, help="master seed (overrides the config)")
    common.add_argument("--out", type=Path, help="output directory (overrides the config)")
    common.add_argument("--jobs", type=int, help="parallel workers (overrides the config)")
    parser = argparse.ArgumentParser(prog="reflected-ou", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in [("simulate", "simulate penalized or projected paths"),
                        ("resolvent", "solve (lam - N_eps) phi = f on a grid or by Monte Carlo"),
                        ("surface", "surface measures, co-area check and pushforward density"),
                        ("perturb", "resolvent and invariant density under a drift perturbation")]:
        sub.add_parser(name, parents=[common], help=help_)
    v = sub.add_parser("verify", parents=[common], help="run a suite of checks")
    v.add_argument("--suite", help=f"named suite ({', '.join(catalog.SUITES)}); default: the config's suite")
    ls = sub.add_parser("list", help="list registered checks with anchors and tolerances")
    ls.add_argument("--json", action="store_true")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "list":
        return cmd_list(as_json=args.json)
    try:
        overrides = {"seed": args.seed, "jobs": args.jobs,
                     "output_dir": str(args.out) if args.out is not None else None}
        cfg = load_config(args.config, overrides)
        out = Path(cfg.output_dir)
        jobs = cfg.jobs
        if args.command == "verify":
            return run_suite(cfg, out, getattr(args, "suite", None) or cfg.suite_name, jobs)
        handler = {"simulate": cmd_simulate, "resolvent": cmd_resolvent, "surface": cmd_surface,
                   "perturb": cmd_perturb}[args.command]
        return handler(cfg, out, jobs)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as exc:
        print(f"solver error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
