"""Registry of runnable checks, their anchors, defaults and the built-in suites.

Every check runner takes a :class:`CheckContext` and a dict of resolved parameters and
returns a :class:`CheckOutput` (reports plus optional CSV tables).
"""

from __future__ import annotations

import copy
import re
import zlib
from collections.abc import Callable
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from pydantic import BaseModel, ValidationError
from scipy import stats

from . import perturb as pt
from . import surface as sf
from . import verify as vf
from .config import (
    BodySpec,
    CheckSpec,
    DriftConfig,
    EstimatorSpec,
    FunctionSpec,
    LevelSpec,
    ModelSpec,
    RunConfig,
)
from .errors import ConfigError
from .reports import ResidualReport, flag_report
from .resolvent import GridConfig
from .testfunctions import TestFunction


@dataclass
class CheckContext:
    config: RunConfig
    seed: int
    jobs: int = 1


@dataclass
class CheckOutput:
    reports: list[ResidualReport]
    tables: dict[str, tuple[list[str], np.ndarray]] = field(default_factory=dict)


@dataclass(frozen=True)
class CheckEntry:
    name: str
    anchor: str
    summary: str
    tolerance: str
    defaults: dict
    runner: Callable[[CheckContext, dict], CheckOutput]


REGISTRY: dict[str, CheckEntry] = {}

# Equation labels the catalog may anchor to (data, used by ``list`` and its tests).
ANCHOR_LABELS = (
    "Eq. 1.10", "Eq. 2.8", "Eq. 2.9", "Eq. 2.11", "Eq. 2.15", "Eq. 2.16", "Eq. 2.19", "Eq. 3.2", "Eq. 3.3",
    "Eq. 4.3", "Eq. 4.13", "Eq. 4.15", "Eq. 4.16", "Eq. 4.17", "Eq. 5.2", "Eq. 5.8", "Eq. 5.10", "Eq. 5.15",
    "Eq. A.3", "Eq. A.6", "Eq. A.8", "Prop. 5.6",
)


def register(name: str, anchor: str, summary: str, tolerance: str, defaults: dict):
    def deco(fn):
        if anchor not in ANCHOR_LABELS:
            raise ValueError(f"anchor {anchor!r} is not a known label")
        REGISTRY[name] = CheckEntry(name, anchor, summary, tolerance, defaults, fn)
        return fn

    return deco


# ------------------------------------------------------------------ param parsing
_TYPED: dict[str, type[BaseModel]] = {
    "model": ModelSpec,
    "body": BodySpec,
    "level": LevelSpec,
    "drift": DriftConfig,
}
_FUNCTION_KEYS = {"functions", "phi", "psi", "f", "potential"}


def _parse(key: str, value: Any, where: str):
    try:
        if value is None:
            return None
        if key in _TYPED:
            return _TYPED[key].model_validate(value)
        if key in _FUNCTION_KEYS:
            if isinstance(value, list):
                return [FunctionSpec.model_validate(v) for v in value]
            return FunctionSpec.model_validate(value)
        if key == "estimator":
            return dict(value)
    except ValidationError as exc:
        msgs = "; ".join(f"{where}.{'.'.join(map(str, e['loc']))}: {e['msg']}" for e in exc.errors())
        raise ConfigError(msgs) from None
    return value


def resolve_params(entry: CheckEntry, overrides: dict, where: str = "params") -> dict:
    unknown = sorted(set(overrides) - set(entry.defaults))
    if unknown:
        raise ConfigError(f"{where}.{unknown[0]}: unknown parameter for check '{entry.name}'")
    merged = copy.deepcopy(entry.defaults)
    merged.update(copy.deepcopy(overrides))
    return {k: _parse(k, v, f"{where}.{k}") for k, v in merged.items()}


def check_seed(run_seed: int, name: str, index: int) -> int:
    """Seed of one suite entry, fixed by (run seed, check name, position)."""
    ss = np.random.SeedSequence([run_seed, zlib.crc32(name.encode()), index])
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


# ------------------------------------------------------------------ helpers
def _model(ctx, p):
    return (p["model"] or ctx.config.model).build()


def _body(ctx, p, dim):
    return (p["body"] or ctx.config.body).build(dim)


def _estimator(ctx, p, seed_offset: int = 0) -> vf.EstimatorConfig:
    base = ctx.config.estimator.model_dump()
    base.update(p.get("estimator") or {})
    try:
        spec = EstimatorSpec.model_validate(base)
    except ValidationError as exc:
        raise ConfigError(f"params.estimator: {exc.errors()[0]['msg']}") from None
    return vf.EstimatorConfig(seed=ctx.seed + seed_offset, **spec.model_dump())


def _functions(spec, dim) -> list[TestFunction]:
    specs = spec if isinstance(spec, list) else [spec]
    out = []
    for s in specs:
        out.extend(s.build(dim))
    return out


def _one(spec, dim) -> TestFunction:
    return spec.build_one(dim)


def _z(p, dim):
    z = p["z"]
    if z is None:
        z = [1.0] + [0.0] * (dim - 1)
    if len(z) != dim:
        raise ConfigError(f"params.z: need {dim} components")
    return np.asarray(z, dtype=float)


def _tag(reports: list[ResidualReport], label: str) -> list[ResidualReport]:
    for r in reports:
        r.name = f"{r.name}[{label}]"
    return reports


def _grid(p) -> GridConfig:
    return GridConfig(nodes=p.get("grid_nodes"))


FAMILY = {"kind": "family", "family": "polynomial"}
X1 = {"kind": "coordinate", "index": 0}
ONE_D = {"preset": "constant", "dim": 1, "alpha": 1.0}
BALL = {"kind": "ball", "radius": 1.0}


# ================================================================== verify checks
@register("ibp_mu", "Eq. 1.10", "Gaussian integration by parts for mu", "1e-6 quadrature / max(5e-3, 3 SE) MC",
          {"model": None, "functions": FAMILY, "psi": {"kind": "constant"}, "z": None, "estimator": {},
           "tolerance": None})
def _run_ibp_mu(ctx, p):
    m = _model(ctx, p)
    cfg = _estimator(ctx, p)
    psi = _one(p["psi"], m.dim)
    reps = []
    for phi in _functions(p["functions"], m.dim):
        reps += _tag([vf.ibp_mu(m, phi, psi, _z(p, m.dim), cfg, p["tolerance"])], phi.name)
    return CheckOutput(reps)


@register("ibp_nu", "Eq. 2.11", "integration by parts for the conditioned measure nu",
          "1e-6 quadrature / max(5e-3, 3 SE) MC",
          {"model": None, "body": None, "functions": FAMILY, "z": None, "estimator": {}, "tolerance": None})
def _run_ibp_nu(ctx, p):
    m = _model(ctx, p)
    b = _body(ctx, p, m.dim)
    cfg = _estimator(ctx, p)
    reps = []
    for phi in _functions(p["functions"], m.dim):
        reps += _tag([vf.ibp_nu(m, b, phi, _z(p, m.dim), cfg, p["tolerance"])], phi.name)
    return CheckOutput(reps)


@register("ibp_nu_eps", "Eq. 2.8", "integration by parts for the penalized measure nu_eps",
          "1e-6 quadrature / max(5e-3, 3 SE) MC",
          {"model": None, "body": None, "functions": X1, "z": None, "eps": 0.1, "coefficient": 2.0, "estimator": {},
           "tolerance": None})
def _run_ibp_nu_eps(ctx, p):
    m = _model(ctx, p)
    b = _body(ctx, p, m.dim)
    cfg = _estimator(ctx, p)
    reps = []
    for phi in _functions(p["functions"], m.dim):
        r = vf.ibp_nu_eps(m, b, float(p["eps"]), phi, _z(p, m.dim), cfg, float(p["coefficient"]), p["tolerance"])
        reps += _tag([r], phi.name)
    return CheckOutput(reps)


@register("boundary_limit", "Eq. 2.9", "penalized boundary functional tends to the surface term",
          "gaps strictly decreasing; final gap < 1e-3",
          {"model": None, "body": None, "phi": X1, "z": None, "eps": [1e-1, 1e-2, 1e-3, 1e-4], "final_gap": 1e-3,
           "estimator": {}})
def _run_boundary_limit(ctx, p):
    m = _model(ctx, p)
    b = _body(ctx, p, m.dim)
    res = vf.boundary_limit(m, b, _one(p["phi"], m.dim), _z(p, m.dim), p["eps"], _estimator(ctx, p),
                            float(p["final_gap"]))
    table = np.column_stack([res.eps, res.functional, res.gaps])
    return CheckOutput(res.reports, {"boundary_limit": (["eps", "functional", "gap"], table)})


def _family_ratio(name, fn, ctx, p):
    m = _model(ctx, p)
    b = _body(ctx, p, m.dim)
    cfg = _estimator(ctx, p)
    reps = []
    for phi in _functions(p["functions"], m.dim):
        reps += _tag([fn(m, b, phi, cfg, float(p["ratio_bound"]))], phi.name)
    ratios = [r.lhs for r in reps]
    worst = max(ratios) if ratios else 0.0
    reps.append(ResidualReport(f"{name}/max_ratio", worst, float(p["ratio_bound"]), 0.0, 0.0, kind="inequality",
                               params={"functions": len(ratios)}, extras={"ratios": ratios}))
    return CheckOutput(reps)


@register("trace_inequality", "Eq. 2.15", "boundary trace of phi controlled by its H1(nu) norm",
          "ratio reported; bounded across the family",
          {"model": None, "body": None, "functions": FAMILY, "ratio_bound": 1e3, "estimator": {}})
def _run_trace(ctx, p):
    return _family_ratio("trace_inequality", vf.trace_inequality, ctx, p)


@register("gradient_trace_inequality", "Eq. 2.19", "boundary trace of Dphi controlled by H2-type energy",
          "ratio reported; bounded across the family",
          {"model": None, "body": None, "functions": FAMILY, "ratio_bound": 1e3, "estimator": {}})
def _run_gtrace(ctx, p):
    return _family_ratio("gradient_trace_inequality", vf.gradient_trace_inequality, ctx, p)


@register("log_sobolev", "Eq. 2.16", "log-Sobolev inequality for nu with constant 1/lambda_1",
          "no violation beyond max(tol, 3 SE); constants saturate to 1e-10",
          {"model": None, "body": None, "functions": {"kind": "family", "family": "positive_polynomial", "count": 20},
           "constant": "stated", "saturation": [0.5, 1.0, 2.0], "saturation_tol": 1e-10, "estimator": {},
           "tolerance": None})
def _run_lsi(ctx, p):
    from .testfunctions import constant

    m = _model(ctx, p)
    b = _body(ctx, p, m.dim)
    cfg = _estimator(ctx, p)
    reps = []
    for phi in _functions(p["functions"], m.dim):
        reps += _tag([vf.log_sobolev(m, b, phi, cfg, p["constant"], p["tolerance"])], phi.name)
    for c in p["saturation"] or []:
        r = vf.log_sobolev(m, b, constant(m.dim, float(c)), cfg, p["constant"], float(p["saturation_tol"]))
        r.kind = "identity"  # a constant must give equality, not merely the inequality
        reps += _tag([r], f"saturation c={c:g}")
    return CheckOutput(reps)


@register("invariance", "Eq. 3.3", "int N_eps phi dnu_eps = 0", "1e-6 quadrature / max(5e-3, 3 SE) MC",
          {"model": None, "body": None, "functions": FAMILY, "eps": [1e-1, 1e-2, 1e-3], "estimator": {},
           "tolerance": None})
def _run_invariance(ctx, p):
    m = _model(ctx, p)
    b = _body(ctx, p, m.dim)
    cfg = _estimator(ctx, p)
    reps = []
    for phi in _functions(p["functions"], m.dim):
        reps += _tag(vf.invariance(m, b, phi, p["eps"], cfg, p["tolerance"]), phi.name)
    return CheckOutput(reps)


@register("stationarity", "Eq. 3.3", "long-run law of the projected chain equals nu",
          "KS (1D) or energy distance (n >= 2) < 0.01",
          {"model": None, "body": None, "paths": 10_000, "T": 50.0, "burn_in": 10.0, "h": 1e-3, "per_path": 10,
           "threshold": 0.01})
def _run_stationarity(ctx, p):
    m = _model(ctx, p)
    b = _body(ctx, p, m.dim)
    r = vf.stationarity(m, b, seed=ctx.seed, paths=int(p["paths"]), T=float(p["T"]), burn_in=float(p["burn_in"]),
                        h=float(p["h"]), per_path=int(p["per_path"]), threshold=float(p["threshold"]), jobs=ctx.jobs)
    return CheckOutput([r])


@register("dirichlet_form", "Eq. 4.3", "int N_eps phi psi dnu_eps = -1/2 int <Dphi, Dpsi> dnu_eps",
          "1e-6 quadrature / max(5e-3, 3 SE) MC",
          {"model": None, "body": None, "phi": X1, "psi": X1, "eps": 1e-2, "estimator": {}, "tolerance": None})
def _run_dirichlet(ctx, p):
    m = _model(ctx, p)
    b = _body(ctx, p, m.dim)
    r = vf.dirichlet_form_identity(m, b, _one(p["phi"], m.dim), _one(p["psi"], m.dim), _estimator(ctx, p),
                                   eps=float(p["eps"]), tolerance=p["tolerance"])
    return CheckOutput([r])


@register("dirichlet_form_boundary", "Eq. 3.2", "Dirichlet form on K with the boundary correction",
          "1e-6 quadrature / max(5e-3, 3 SE) MC",
          {"model": None, "body": None, "phi": X1, "psi": X1, "estimator": {}, "tolerance": None})
def _run_dirichlet_boundary(ctx, p):
    m = _model(ctx, p)
    b = _body(ctx, p, m.dim)
    r = vf.dirichlet_form_identity(m, b, _one(p["phi"], m.dim), _one(p["psi"], m.dim), _estimator(ctx, p),
                                   eps=None, tolerance=p["tolerance"])
    return CheckOutput([r])


@register("resolvent_estimates", "Eq. 4.13", "L2, H1 and H2-type bounds for (lam - N_eps)^{-1} f",
          "each inequality within 1e-6 (grid quadrature)",
          {"model": None, "body": None, "f": X1, "lam": 1.0, "eps": [1e-1, 1e-2, 1e-3], "grid_nodes": None,
           "tolerance": 1e-6})
def _run_resolvent_estimates(ctx, p):
    m = _model(ctx, p)
    b = _body(ctx, p, m.dim)
    f = _one(p["f"], m.dim)
    reps = []
    for eps in p["eps"]:
        reps += _tag(vf.resolvent_estimates(m, b, float(eps), float(p["lam"]), f, _grid(p), float(p["tolerance"])),
                     f"eps={eps:g}")
    return CheckOutput(reps)


def _default_probes(body, dim: int) -> np.ndarray:
    raw = np.zeros((5, dim))
    raw[1, 0] = 0.5
    raw[2, min(1, dim - 1)] = 0.5
    raw[2, min(2, dim - 1)] += 0.3
    raw[3, 0] = 0.9
    raw[4, :] = 0.3
    pts, _ = body.project_points(raw)
    return 0.98 * pts


@register("gradient_bound", "Eq. 4.16", "|D (lam - N_eps)^{-1} f| <= sup|Df| / lam (Monte Carlo)",
          "holds within 3 SE at every probe",
          {"model": None, "body": None, "f": None, "lam": 1.0, "eps": 1e-2, "probes": None, "paths": 4000,
           "h": 1e-3, "target_tol": 1e-2})
def _run_gradient_bound(ctx, p):
    from .testfunctions import trig

    m = _model(ctx, p)
    b = _body(ctx, p, m.dim)
    if p["f"] is None:
        h = np.zeros(m.dim)
        h[: min(2, m.dim)] = 1.0
        f = trig(h, "sin")
    else:
        f = _one(p["f"], m.dim)
    probes = _default_probes(b, m.dim) if p["probes"] is None else np.asarray(p["probes"], dtype=float)
    reps = vf.gradient_bound(m, b, float(p["eps"]), float(p["lam"]), f, probes, int(p["paths"]), ctx.seed,
                             h=float(p["h"]), target_tol=float(p["target_tol"]), jobs=ctx.jobs)
    return CheckOutput(reps)


@register("feynman_kac", "Eq. 4.15", "Monte Carlo resolvent against the grid oracle",
          "max(1e-2, 3 SE)",
          {"model": None, "body": None, "f": {"kind": "trig", "h": [1.0], "part": "cos"}, "lam": 1.0, "eps": 1e-2,
           "x": None, "paths": 4000, "h": 1e-3, "floor": 1e-2, "grid_nodes": None})
def _run_feynman_kac(ctx, p):
    m = _model(ctx, p)
    b = _body(ctx, p, m.dim)
    f = _one(p["f"], m.dim)
    x = np.zeros(m.dim) if p["x"] is None else np.asarray(p["x"], dtype=float)
    if f.sup_abs is None:
        raise ConfigError("params.f: feynman_kac needs a bounded function (trig or constant)")
    r = vf.feynman_kac_vs_grid(m, b, float(p["eps"]), float(p["lam"]), f, x, int(p["paths"]), ctx.seed,
                               f.sup_abs, h=float(p["h"]), floor=float(p["floor"]), grid=_grid(p), jobs=ctx.jobs)
    return CheckOutput([r])


@register("neumann_convergence", "Eq. 4.17", "penalized solutions converge to the Neumann solution",
          "increments decrease; |phi'(+-1)| < 1e-3 at finest eps; extrapolation stable to 1e-4",
          {"model": None, "body": None, "f": X1, "lam": 1.0,
           "eps": [float(10 ** (-k / 2)) for k in range(2, 9)], "grid_nodes": None, "boundary_tol": 1e-3,
           "center_tol": 1e-4})
def _run_neumann(ctx, p):
    m = _model(ctx, p)
    b = _body(ctx, p, m.dim)
    reps = vf.neumann_convergence(m, b, float(p["lam"]), _one(p["f"], m.dim), p["eps"], _grid(p),
                                  float(p["boundary_tol"]), float(p["center_tol"]))
    return CheckOutput(reps)


# ================================================================= surface checks
@register("coarea", "Eq. A.8", "co-area formula: int f dmu against the integral of shell measures",
          "within 1% (plus tail bound)",
          {"model": None, "level": {"kind": "quadratic"}, "body": None,
           "functions": [{"kind": "constant"}, {"kind": "polynomial", "terms": [[[2, 0], 1.0]], "name": "x1^2"}],
           "r_max": 20.0, "shells": 400, "rel_tol": 0.01, "method": "auto", "samples": 1_000_000})
def _run_coarea(ctx, p):
    m = _model(ctx, p)
    g = p["level"].build(m.dim, _body(ctx, p, m.dim))
    reps = []
    for f in _functions(p["functions"], m.dim):
        r = sf.coarea_check(m, g, f, float(p["r_max"]), shells=int(p["shells"]), kind=p["method"],
                            rel_tol=float(p["rel_tol"]), samples=int(p["samples"]), seed=ctx.seed)
        reps += _tag([r], f.name)
    rs = np.linspace(0.05, float(p["r_max"]), 40)
    curve = sf.sigma_curve(m, g, rs, kind=p["method"], samples=int(p["samples"]), seed=ctx.seed)
    return CheckOutput(reps, {"sigma_curve": (["r", "value", "std_error"], curve)})


def _radial_reference(model, level_spec, r):
    lam = model.lambdas
    w = np.asarray(level_spec.weights if level_spec.weights is not None else [1.0] * model.dim)
    scale = lam * w
    if not np.allclose(scale, scale[0]):
        raise ConfigError("the chi-square reference needs equal lambda_k * weight_k")
    s = float(scale[0])
    return stats.chi2(model.dim).pdf(np.asarray(r) / s) / s


@register("pushforward_density", "Eq. A.6", "density of g under mu from the integration-by-parts weight",
          "relative error < 2% against the chi-square law",
          {"model": None, "level": {"kind": "quadratic"}, "body": None, "r": [0.5, 1.0, 1.5, 2.0, 3.0],
           "samples": 1_000_000, "h_shell": 0.02, "rel_tol": 0.02})
def _run_density(ctx, p):
    m = _model(ctx, p)
    g = p["level"].build(m.dim, _body(ctx, p, m.dim))
    rs = np.asarray(p["r"], dtype=float)
    est = sf.pushforward_density(m, g, rs, h_shell=float(p["h_shell"]), samples=int(p["samples"]), seed=ctx.seed)
    ref = _radial_reference(m, p["level"], rs)
    reps = []
    for e, exact in zip(est, ref):
        reps.append(ResidualReport(f"pushforward_density[r={e.r:g}]", e.value, float(exact), e.std_error,
                                   float(p["rel_tol"]) * float(exact), error_kind="monte_carlo",
                                   params={"model": m.to_dict(), "h_shell": e.h_shell, "samples": e.samples,
                                           "seed": ctx.seed},
                                   extras={"relative_error": (e.value - float(exact)) / float(exact)}))
    table = np.column_stack([rs, [e.value for e in est], [e.std_error for e in est], ref])
    return CheckOutput(reps, {"density": (["r", "value", "std_error", "reference"], table)})


@register("hypothesis", "Eq. A.3", "finiteness of the integrals behind the density formula",
          "each integral flagged divergent exactly when expected",
          {"model": None, "level": {"kind": "quadratic"}, "body": None, "samples": 1_000_000,
           "expect_divergent": []})
def _run_hypothesis(ctx, p):
    m = _model(ctx, p)
    g = p["level"].build(m.dim, _body(ctx, p, m.dim))
    h = sf.hypothesis_integrals(m, g, samples=int(p["samples"]), seed=ctx.seed)
    expect = set(p["expect_divergent"] or [])
    reps = []
    for key in ("I1", "I2", "I3", "J1"):
        want = key in expect
        reps.append(flag_report(
            f"hypothesis[{key} {'divergent' if want else 'finite'}]", h.diverges[key] == want,
            {"model": m.to_dict(), "samples": int(p["samples"]), "seed": ctx.seed},
            {"value": h.values[key], "std_error": h.errors[key], "tail_index": h.tail_index[key],
             "refinements": h.refinements[key], "flagged": h.diverges[key]},
        ))
    return CheckOutput(reps)


# ================================================================= perturbations
QUARTER_X2 = {"kind": "polynomial", "terms": [[[2], 0.25]], "name": "x^2/4"}
CONST_03 = {"kind": "constant", "vector": [0.3]}


@register("zeta_ibp", "Eq. 5.2", "integration by parts for zeta = exp(-2V) nu / Z",
          "1e-6 quadrature / max(5e-3, 3 SE) MC",
          {"model": None, "body": None, "potential": QUARTER_X2, "functions": FAMILY, "z": None, "estimator": {},
           "tolerance": None})
def _run_zeta(ctx, p):
    m = _model(ctx, p)
    b = _body(ctx, p, m.dim)
    v = _one(p["potential"], m.dim)
    cfg = _estimator(ctx, p)
    reps = []
    for phi in _functions(p["functions"], m.dim):
        reps += _tag([pt.zeta_ibp(m, b, v, phi, _z(p, m.dim), cfg, p["tolerance"])], phi.name)
    return CheckOutput(reps)


def _drift(p, dim, points=None):
    d = p["drift"].build(dim)
    if points is not None:
        d.validate(points)
    return d


@register("t_lambda", "Eq. 5.10", "|T_lam psi| <= sqrt(2/lam) |F|_0 |psi| in L2(nu)",
          "ratio below the bound (plus 3 SE for Monte Carlo)",
          {"model": None, "body": None, "drift": CONST_03, "lam": 1.0, "functions": FAMILY, "backend": "grid",
           "grid_nodes": None, "paths": 2000})
def _run_t_lambda(ctx, p):
    m = _model(ctx, p)
    b = _body(ctx, p, m.dim)
    d = _drift(p, m.dim)
    reps = []
    for psi in _functions(p["functions"], m.dim):
        res = pt.t_lambda_apply(m, b, d, float(p["lam"]), psi, backend=p["backend"], grid=_grid(p),
                                paths=int(p["paths"]), seed=ctx.seed, jobs=ctx.jobs)
        if res.backend == "grid":
            r = ResidualReport("t_lambda", res.ratio, res.bound, 0.0, 0.0, kind="inequality",
                               params={"lambda": p["lam"], "drift": d.describe()}, extras={"backend": "grid"})
        else:
            pv = np.asarray(psi(res.points), dtype=float)
            num = float(np.sqrt(np.mean(res.values**2)))
            den = float(np.sqrt(np.mean(pv**2)))
            se = float(np.sqrt(np.mean(res.std_error**2)))
            r = ResidualReport("t_lambda", num / den if den > 0 else 0.0, res.bound, se / den if den > 0 else 0.0,
                               0.0, kind="inequality", error_kind="monte_carlo",
                               params={"lambda": p["lam"], "drift": d.describe(), "paths": p["paths"],
                                       "seed": ctx.seed},
                               extras={"probe_values": res.values.tolist()})
        reps += _tag([r], psi.name)
    return CheckOutput(reps)


@register("perturbed_resolvent", "Eq. 5.8", "resolvent of N + <F, D> by the Neumann series",
          "sup difference to the direct solve < 1e-6; contraction ratio <= 1.1 sqrt(2/lam) |F|_0",
          {"model": {"preset": "constant", "dim": 1, "alpha": 1.0}, "body": None, "drift": CONST_03, "lam": 1.0,
           "f": X1, "grid_nodes": None, "direct_tol": 1e-6, "ratio_slack": 1.1})
def _run_perturbed(ctx, p):
    m = _model(ctx, p)
    b = _body(ctx, p, m.dim)
    d = _drift(p, m.dim)
    res = pt.perturbed_resolvent(m, b, d, float(p["lam"]), _one(p["f"], m.dim), _grid(p))
    params = {"model": m.to_dict(), "body": b.to_dict(), "drift": d.describe(), "lambda": p["lam"]}
    reps = pt.series_reports(res, params, float(p["direct_tol"]), float(p["ratio_slack"]))
    table = np.column_stack([res.points, res.values, res.direct])
    cols = [f"x{k + 1}" for k in range(m.dim)] + ["series", "direct"]
    return CheckOutput(reps, {"perturbed_resolvent": (cols, table)})


@register("invariant_density", "Eq. 5.15", "invariant density of N + <F, D> relative to nu (1D grid)",
          "rho >= 0; |G* rho| < 1e-8; invariance < 1e-6; exp(-2V) recovery < 1e-6",
          {"model": ONE_D, "body": None, "drift": CONST_03, "grid_nodes": None, "residual_tol": 1e-8,
           "invariance_tol": 1e-6, "recovery_tol": 1e-6})
def _run_invariant_density(ctx, p):
    m = _model(ctx, p)
    b = _body(ctx, p, m.dim)
    d = _drift(p, m.dim)
    dens = pt.invariant_density(m, b, d, _grid(p), tol=float(p["residual_tol"]))
    params = {"model": m.to_dict(), "body": b.to_dict(), "drift": d.describe()}
    reps = [
        flag_report("invariant_density/nonnegative", bool(dens.density.min() >= 0), params,
                    {"min": float(dens.density.min())}),
        ResidualReport("invariant_density/adjoint_residual", dens.residual, 0.0, 0.0, float(p["residual_tol"]),
                       params=params, extras={"iterations": dens.iterations}),
        ResidualReport("invariant_density/invariance", max(dens.invariance.values()), 0.0, 0.0,
                       float(p["invariance_tol"]), params=params, extras=dens.invariance),
    ]
    if d.kind == "gradient":
        err = pt.gradient_density_error(dens, d.potential)
        reps.append(ResidualReport("invariant_density/gradient_recovery", err, 0.0, 0.0, float(p["recovery_tol"]),
                                   params=params))
    elif d.sup == 0:
        reps.append(ResidualReport("invariant_density/unperturbed", float(np.abs(dens.density - 1).max()), 0.0, 0.0,
                                   1e-8, params=params))
    table = np.column_stack([dens.points, dens.density])
    return CheckOutput(reps, {"invariant_density": (["x1", "density"], table)})


@register("dissipativity", "Prop. 5.6", "int sign(phi) G phi dzeta <= 0 on the grid", "<= 1e-8",
          {"model": ONE_D, "body": None, "drift": CONST_03, "functions": FAMILY, "grid_nodes": None, "tol": 1e-8})
def _run_dissipativity(ctx, p):
    m = _model(ctx, p)
    b = _body(ctx, p, m.dim)
    d = _drift(p, m.dim)
    fs = _functions(p["functions"], m.dim)
    vals = pt.l1_dissipativity(m, b, d, fs, _grid(p))
    reps = [ResidualReport(f"dissipativity[{f.name}]", v, 0.0, 0.0, float(p["tol"]), kind="inequality",
                           params={"drift": d.describe()}) for f, v in zip(fs, vals)]
    return CheckOutput(reps)


# ==================================================================== suites
N4 = {"alphas": [1.0, 2.0, 3.0, 4.0]}
N3 = {"preset": "constant", "dim": 3, "alpha": 1.0}
N2 = {"preset": "constant", "dim": 2, "alpha": 1.0}
MC = {"method": "monte_carlo", "samples": 1_000_000}

# (criterion, check, params)
ACCEPTANCE: list[tuple[int, str, dict]] = [
    (1, "ibp_nu", {"model": ONE_D, "body": BALL, "estimator": {"method": "quadrature"}, "tolerance": 1e-6}),
    (1, "ibp_nu", {"model": N4, "body": BALL, "z": [1.0, 0.5, 0.0, 0.0], "estimator": MC, "tolerance": 5e-3}),
    (2, "boundary_limit", {"model": ONE_D, "body": BALL, "estimator": {"method": "quadrature"}}),
    (3, "resolvent_estimates", {"model": ONE_D, "body": BALL}),
    (4, "gradient_bound", {"model": N4, "body": BALL}),
    (5, "neumann_convergence", {"model": ONE_D, "body": BALL}),
    (6, "invariance", {"model": ONE_D, "body": BALL, "estimator": {"method": "quadrature"}, "tolerance": 1e-6}),
    (6, "stationarity", {"model": ONE_D, "body": BALL}),
    (7, "coarea", {"model": N2, "method": "quadrature"}),
    (8, "pushforward_density", {"model": N3}),
    (8, "hypothesis", {"model": N3}),
    # In one dimension 1/|x|^2 is not integrable at the origin, so I1 and I2 diverge with J1.
    (8, "hypothesis", {"model": ONE_D, "expect_divergent": ["I1", "I2", "J1"]}),
    (9, "log_sobolev", {"model": ONE_D, "body": BALL, "estimator": {"method": "quadrature"}}),
    (9, "log_sobolev", {"model": N4, "body": BALL, "estimator": MC}),
    (10, "perturbed_resolvent", {"model": ONE_D, "body": BALL, "lam": 1.0}),
    (10, "invariant_density", {"model": ONE_D, "body": BALL}),
    (10, "invariant_density", {"model": ONE_D, "body": BALL,
                               "drift": {"kind": "gradient", "potential": QUARTER_X2}}),
    (10, "invariant_density", {"model": ONE_D, "body": BALL, "drift": {"kind": "constant", "vector": [0.0]}}),
]

SMOKE: list[tuple[str, dict]] = [
    ("ibp_nu", {"model": ONE_D, "body": BALL, "estimator": {"method": "quadrature"}}),
    ("ibp_nu", {"model": N4, "body": BALL, "z": [1.0, 0.5, 0.0, 0.0],
                "estimator": {"method": "monte_carlo", "samples": 50_000}, "tolerance": 5e-2}),
    ("resolvent_estimates", {"model": ONE_D, "body": BALL, "eps": [1e-2], "grid_nodes": 512}),
    ("gradient_bound", {"model": {"alphas": [1.0, 2.0]}, "body": BALL, "paths": 200, "probes": [[0.0, 0.0]],
                        "target_tol": 0.1}),
    ("stationarity", {"model": ONE_D, "body": BALL, "paths": 400, "T": 4.0, "burn_in": 2.0, "h": 1e-2,
                      "per_path": 5, "threshold": 0.1}),
    ("perturbed_resolvent", {"model": ONE_D, "body": BALL, "grid_nodes": 256}),
]


def suite(name: str) -> list[CheckSpec]:
    if name == "acceptance":
        return [CheckSpec(check=c, params=p) for _, c, p in ACCEPTANCE]
    if name == "smoke":
        return [CheckSpec(check=c, params=p) for c, p in SMOKE]
    raise ConfigError(f"unknown suite {name!r} (known: {', '.join(SUITES)})")


SUITES = ("acceptance", "smoke")


def catalog_rows() -> list[dict]:
    return [{"check": e.name, "anchor": e.anchor, "summary": e.summary, "tolerance": e.tolerance}
            for e in REGISTRY.values()]


def anchor_numbers(anchor: str) -> str:
    return re.sub(r"^(Eq\.|Prop\.|Thm\.|Lemma)\s*", "", anchor)
