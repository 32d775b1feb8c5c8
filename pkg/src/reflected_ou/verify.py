"""Quantitative checks of the identities and inequalities; each returns ResidualReport(s).

Conventions used by every check (see ``convexbody`` and ``surface``):

* the penalty is ``beta_eps = (x - Pi_K x)/eps`` and ``nu_eps`` has density
  proportional to ``exp(-d_K^2/eps)`` with respect to mu;
* ``sigma_Sigma = |Dg| sigma_1`` is the Gaussian surface measure of the boundary.

With these, integration by parts on K reads

    int_K <Dphi, Q^{1/2} z> dnu = 1/mu(K) int_Sigma phi <n, Q^{1/2} z> dsigma_Sigma
                                  + int_K W_z phi dnu,

and the penalized boundary functional (1/eps) int phi <x - Pi_K x, Q^{1/2} z> dnu_eps
tends to half of the surface term.
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats
from scipy.special import ndtr

from .convexbody import ConvexBody, WholeSpace
from .errors import ChainNotMixed
from .measures import (
    Estimate,
    combine,
    nu_eps_mala,
    nu_eps_rule,
    nu_rejection,
    nu_rule,
    ratio,
)
from .reports import ResidualReport, flag_report
from .resolvent import (
    GridConfig,
    feynman_kac,
    grid_solve,
    neumann_limit,
    resolvent_gradient,
    one_sided_derivatives,
)
from .rng import stream
from .sde import Accumulator, Scheme, run_paths
from .spectral import SpectralModel, sample_mu, white_noise
from .surface import surface_integral
from .testfunctions import TestFunction

__all__ = [
    "EstimatorConfig",
    "ResidualReport",
    "ibp_mu",
    "ibp_nu",
    "ibp_nu_eps",
    "boundary_limit",
    "trace_inequality",
    "gradient_trace_inequality",
    "log_sobolev",
    "invariance",
    "stationarity",
    "dirichlet_form_identity",
    "resolvent_estimates",
    "gradient_bound",
    "feynman_kac_vs_grid",
    "neumann_convergence",
]


@dataclass(frozen=True)
class EstimatorConfig:
    """How integrals are computed. ``method='auto'`` uses quadrature in dimension <= 2."""

    method: str = "auto"
    samples: int = 1_000_000
    h_shell: float = 0.02
    order: int = 64
    seed: int = 0
    mala_draws: int = 2000
    mala_chains: int = 32
    mala_burn_in: int = 2000
    mala_thin: int = 10

    def resolve(self, dim: int) -> str:
        if self.method == "auto":
            return "quadrature" if dim <= 2 else "monte_carlo"
        if self.method not in ("quadrature", "monte_carlo"):
            raise ValueError(f"unknown method {self.method!r}")
        return self.method

    def describe(self, dim: int) -> dict:
        d = asdict(self)
        d["method"] = self.resolve(dim)
        return d


QUADRATURE_TOL = 1e-6
MC_TOL = 5e-3


def _tol(cfg: EstimatorConfig, dim: int, tolerance: float | None) -> float:
    if tolerance is not None:
        return tolerance
    return QUADRATURE_TOL if cfg.resolve(dim) == "quadrature" else MC_TOL


# ------------------------------------------------------------------ integrators
def _nu(model, body, cfg):
    if cfg.resolve(model.dim) == "quadrature":
        rule = nu_rule(model, body, cfg.order)
        mass = Estimate(rule.meta["mass"], rule.meta["mass_error"], "quadrature")
        return rule, mass
    s = nu_rejection(model, body, stream(cfg.seed, 1), cfg.samples)
    return s, Estimate(s.meta["mass"], s.meta["mass_error"], "monte_carlo")


def _nu_eps(model, body, eps, cfg):
    if cfg.resolve(model.dim) == "quadrature":
        return nu_eps_rule(model, body, eps, cfg.order)
    if isinstance(body, WholeSpace):
        return nu_rejection(model, body, stream(cfg.seed, 1), cfg.samples)
    return nu_eps_mala(
        model, body, eps, stream(cfg.seed, 3, int(round(-math.log10(eps) * 1000))),
        draws=cfg.mala_draws, chains=cfg.mala_chains, burn_in=cfg.mala_burn_in, thin=cfg.mala_thin,
    )


def _surface(model, body, f, cfg) -> Estimate:
    """int_Sigma f dsigma_Sigma."""
    kind = cfg.resolve(model.dim)
    if kind == "quadrature":
        return surface_integral(model, body, f, kind="quadrature")
    pts = sample_mu(model, stream(cfg.seed, 2), cfg.samples)
    return surface_integral(model, body, f, kind="monte_carlo", h_shell=cfg.h_shell, points=pts)


def _unit_normal(body, x):
    """Dg/|Dg|; agrees with the exterior normal on the boundary and extends it to a shell."""
    dg = body.g.grad(x)
    return dg / np.linalg.norm(dg, axis=1)[:, None]


def _sqz(model, z):
    z = np.asarray(z, dtype=float)
    if z.shape != (model.dim,):
        raise ValueError(f"z must have shape ({model.dim},)")
    return model.sqrt_lambdas * z


def _params(model, body, cfg, **extra):
    out = {"model": model.to_dict(), "body": body.to_dict(), "estimator": cfg.describe(model.dim)}
    out.update(extra)
    return out


def _generator(model: SpectralModel, phi: TestFunction, x: np.ndarray) -> np.ndarray:
    """L phi = 1/2 Lap phi - <A x, D phi>."""
    return 0.5 * phi.laplacian(x) - np.sum((x * model.alpha) * phi.grad(x), axis=1)


def _penalized_generator(model, body, eps, phi, x):
    return _generator(model, phi, x) - np.sum(body.penalty_gradient(x, eps) * phi.grad(x), axis=1)


# ------------------------------------------------------------ integration by parts
def ibp_mu(model: SpectralModel, phi: TestFunction, psi: TestFunction, z, cfg=EstimatorConfig(),
           tolerance: float | None = None) -> ResidualReport:
    """int <Dphi, Q^{1/2}z> psi + <Dpsi, Q^{1/2}z> phi - W_z phi psi dmu = 0."""
    body = WholeSpace(model.dim)
    integ, _ = _nu(model, body, cfg)
    sqz = _sqz(model, z)
    lhs = integ.expect(lambda x: (phi.grad(x) @ sqz) * psi(x) + (psi.grad(x) @ sqz) * phi(x))
    rhs = integ.expect(lambda x: white_noise(model, z, x) * phi(x) * psi(x))
    diff = lhs - rhs
    return ResidualReport(
        "ibp_mu", lhs.value, rhs.value, diff.error if diff.kind == "monte_carlo" else 0.0,
        _tol(cfg, model.dim, tolerance), error_kind=diff.kind,
        params=_params(model, body, cfg, phi=phi.describe(), psi=psi.describe(), z=list(map(float, z))),
        extras={"error_bound": diff.error},
    )


def ibp_nu(
    model: SpectralModel, body: ConvexBody, phi: TestFunction, z, cfg: EstimatorConfig = EstimatorConfig(),
    tolerance: float | None = None,
) -> ResidualReport:
    """int_K <Dphi, Q^{1/2}z> dnu = (1/mu(K)) int_Sigma phi <n, Q^{1/2}z> dsigma + int_K W_z phi dnu."""
    sqz = _sqz(model, z)
    integ, mass = _nu(model, body, cfg)
    grad_term = integ.expect(lambda x: phi.grad(x) @ sqz)
    wz_term = integ.expect(lambda x: white_noise(model, z, x) * phi(x))
    joint = integ.expect(lambda x: phi.grad(x) @ sqz - white_noise(model, z, x) * phi(x))
    surf = _surface(model, body, lambda x: phi(x) * (_unit_normal(body, x) @ sqz), cfg)
    boundary = ratio(surf, mass)
    resid = combine([joint, boundary], [1.0, -1.0])
    return ResidualReport(
        "ibp_nu",
        lhs=grad_term.value,
        rhs=boundary.value + wz_term.value,
        stat_error=resid.error if resid.kind == "monte_carlo" else 0.0,
        tolerance=_tol(cfg, model.dim, tolerance),
        error_kind=resid.kind,
        params=_params(model, body, cfg, phi=phi.describe(), z=list(map(float, z))),
        extras={
            "boundary_term": boundary.value,
            "white_noise_term": wz_term.value,
            "mass": mass.value,
            "error_bound": resid.error,
        },
    )


def ibp_nu_eps(
    model: SpectralModel, body: ConvexBody, eps: float, phi: TestFunction, z,
    cfg: EstimatorConfig = EstimatorConfig(), coefficient: float = 2.0, tolerance: float | None = None,
) -> ResidualReport:
    """int <Dphi, Q^{1/2}z> dnu_eps = (c/eps) int phi <x - Pi_K x, Q^{1/2}z> dnu_eps + int W_z phi dnu_eps.

    The density convention fixes c = 2; other values are accepted to show they fail.
    """
    sqz = _sqz(model, z)
    integ = _nu_eps(model, body, eps, cfg)

    def pen(x):
        return (coefficient / eps) * phi(x) * ((x - body.project_points(x)[0]) @ sqz)

    lhs = integ.expect(lambda x: phi.grad(x) @ sqz)
    pterm = integ.expect(pen)
    wz = integ.expect(lambda x: white_noise(model, z, x) * phi(x))
    joint = integ.expect(lambda x: phi.grad(x) @ sqz - pen(x) - white_noise(model, z, x) * phi(x))
    return ResidualReport(
        "ibp_nu_eps",
        lhs=lhs.value,
        rhs=pterm.value + wz.value,
        stat_error=joint.error if joint.kind == "monte_carlo" else 0.0,
        tolerance=_tol(cfg, model.dim, tolerance),
        error_kind=joint.kind,
        params=_params(model, body, cfg, eps=eps, phi=phi.describe(), z=list(map(float, z)), coefficient=coefficient),
        extras={"penalty_term": pterm.value, "white_noise_term": wz.value, "error_bound": joint.error,
                **({"mcmc": getattr(integ, "meta", {})} if joint.kind == "monte_carlo" else {})},
    )


@dataclass
class BoundaryLimit:
    eps: list[float]
    functional: list[float]
    surface_term: float
    gaps: list[float]
    reports: list[ResidualReport] = field(default_factory=list)


def boundary_limit(
    model: SpectralModel, body: ConvexBody, phi: TestFunction, z, eps_list: Sequence[float],
    cfg: EstimatorConfig = EstimatorConfig(), final_gap: float = 1e-3,
) -> BoundaryLimit:
    """(1/eps) int phi <x - Pi_K x, Q^{1/2}z> dnu_eps versus (1/(2 mu(K))) int_Sigma phi <n, Q^{1/2}z> dsigma."""
    sqz = _sqz(model, z)
    _, mass = _nu(model, body, cfg)
    surf = _surface(model, body, lambda x: phi(x) * (_unit_normal(body, x) @ sqz), cfg)
    target = ratio(surf, mass).scale(0.5)
    vals, errs = [], []
    for eps in eps_list:
        integ = _nu_eps(model, body, eps, cfg)
        est = integ.expect(lambda x: phi(x) * ((x - body.project_points(x)[0]) @ sqz) / eps)
        vals.append(est.value)
        errs.append(est.error)
    gaps = [abs(v - target.value) for v in vals]
    params = _params(model, body, cfg, phi=phi.describe(), z=list(map(float, z)), eps=list(eps_list))
    monotone = all(b < a for a, b in zip(gaps, gaps[1:]))
    err_final = math.hypot(errs[-1], target.error) if target.kind == "monte_carlo" else 0.0
    reps = [
        flag_report("boundary_limit/monotone_gaps", monotone, params, {"gaps": gaps}),
        ResidualReport(
            "boundary_limit/final_gap", lhs=gaps[-1], rhs=final_gap, stat_error=err_final, tolerance=0.0,
            kind="inequality", error_kind=target.kind, params=params,
            extras={"gaps": gaps, "functional": vals, "surface_term": target.value,
                    "gap_over_sqrt_eps": [g / math.sqrt(e) for g, e in zip(gaps, eps_list)]},
        ),
    ]
    return BoundaryLimit(list(eps_list), vals, target.value, gaps, reps)


# ------------------------------------------------------------------ inequalities
def _q_normal_sq(model, body, x):
    n = _unit_normal(body, x)
    return np.sum(model.lambdas * n * n, axis=1)


def trace_inequality(
    model: SpectralModel, body: ConvexBody, phi: TestFunction, cfg: EstimatorConfig = EstimatorConfig(),
    ratio_bound: float = 1e3,
) -> ResidualReport:
    """int_Sigma |Q^{1/2}n|^2 phi^2 dsigma <= C (int_K phi^2 + |Dphi|^2 dnu); reports the ratio."""
    integ, _ = _nu(model, body, cfg)
    surf = _surface(model, body, lambda x: _q_normal_sq(model, body, x) * phi(x) ** 2, cfg)
    vol = integ.expect(lambda x: phi(x) ** 2 + np.sum(phi.grad(x) ** 2, axis=1))
    return _ratio_report("trace_inequality", surf, vol, ratio_bound, model, body, cfg, phi)


def gradient_trace_inequality(
    model: SpectralModel, body: ConvexBody, phi: TestFunction, cfg: EstimatorConfig = EstimatorConfig(),
    ratio_bound: float = 1e3,
) -> ResidualReport:
    """int_Sigma |Q^{1/2}n|^2 |Dphi|^2 dsigma <= C (int_K |Dphi|^2 + |Tr[(D^2 phi)^2]| dnu)."""
    integ, _ = _nu(model, body, cfg)
    surf = _surface(model, body, lambda x: _q_normal_sq(model, body, x) * np.sum(phi.grad(x) ** 2, axis=1), cfg)
    vol = integ.expect(lambda x: np.sum(phi.grad(x) ** 2, axis=1)
                       + np.abs(np.einsum("mkl,mlk->m", phi.hess(x), phi.hess(x))))
    return _ratio_report("gradient_trace_inequality", surf, vol, ratio_bound, model, body, cfg, phi)


def _ratio_report(name, surf, vol, bound, model, body, cfg, phi):
    if vol.value <= 0:
        r = Estimate(0.0, 0.0, vol.kind) if abs(surf.value) <= 1e-300 else Estimate(math.inf, 0.0, vol.kind)
    else:
        r = ratio(surf, vol)
    return ResidualReport(
        name, lhs=r.value, rhs=bound, stat_error=r.error if r.kind == "monte_carlo" else 0.0, tolerance=0.0,
        kind="inequality", error_kind=r.kind, params=_params(model, body, cfg, phi=phi.describe()),
        extras={"boundary": surf.value, "volume": vol.value, "ratio": r.value},
    )


def log_sobolev(
    model: SpectralModel, body: ConvexBody, phi: TestFunction, cfg: EstimatorConfig = EstimatorConfig(),
    constant: str | float = "stated", tolerance: float | None = None,
) -> ResidualReport:
    """int phi^2 log phi^2 dnu <= C int |Dphi|^2 dnu + m log m, m = int phi^2 dnu.

    ``constant='stated'`` uses C = 1/lambda_1; ``'sharp'`` uses the Bakry-Emery value
    C = 2 lambda_1 = 1/alpha_1 for a log-concave perturbation of mu. The sharp margin is
    always reported.
    """
    lam1 = float(model.lambdas.max())
    consts = {"stated": 1.0 / lam1, "sharp": 2.0 * lam1}
    c = consts[constant] if isinstance(constant, str) else float(constant)
    integ, _ = _nu(model, body, cfg)
    ent = lambda x: phi(x) ** 2 * np.log(phi(x) ** 2 + 1e-30)  # noqa: E731
    energy = lambda x: np.sum(phi.grad(x) ** 2, axis=1)  # noqa: E731
    e_ent = integ.expect(ent)
    e_en = integ.expect(energy)
    m = integ.expect(lambda x: phi(x) ** 2)
    mlogm = m.value * math.log(m.value) if m.value > 0 else 0.0
    lhs, rhs = e_ent.value, c * e_en.value + mlogm
    if e_ent.kind == "monte_carlo":
        # Delta method on lhs - rhs as one mean of per-sample influence values.
        infl = integ.expect(lambda x: ent(x) - c * energy(x) - (math.log(m.value) + 1.0) * phi(x) ** 2)
        se = infl.error
    else:
        se = 0.0
    sharp_rhs = consts["sharp"] * e_en.value + mlogm
    return ResidualReport(
        "log_sobolev", lhs=lhs, rhs=rhs, stat_error=se, tolerance=_tol(cfg, model.dim, tolerance),
        kind="inequality", error_kind=e_ent.kind,
        params=_params(model, body, cfg, phi=phi.describe(), constant=c),
        extras={"margin": rhs - lhs, "sharp_constant": consts["sharp"], "sharp_margin": sharp_rhs - lhs,
                "energy": e_en.value, "mass2": m.value},
    )


# ----------------------------------------------------------------- invariance
def invariance(
    model: SpectralModel, body: ConvexBody, phi: TestFunction, eps_list: Sequence[float] = (1e-1, 1e-2, 1e-3),
    cfg: EstimatorConfig = EstimatorConfig(), tolerance: float | None = None,
) -> list[ResidualReport]:
    """int N_eps phi dnu_eps = 0 for each eps."""
    out = []
    for eps in eps_list:
        integ = _nu_eps(model, body, eps, cfg)
        est = integ.expect(lambda x: _penalized_generator(model, body, eps, phi, x))
        out.append(ResidualReport(
            f"invariance/eps={eps:g}", lhs=est.value, rhs=0.0,
            stat_error=est.error if est.kind == "monte_carlo" else 0.0,
            tolerance=_tol(cfg, model.dim, tolerance), error_kind=est.kind,
            params=_params(model, body, cfg, phi=phi.describe(), eps=eps), extras={"error_bound": est.error},
        ))
    return out


class _Collect(Accumulator):
    def __init__(self, starts, paths, wanted):
        self.wanted = {s: i for i, s in enumerate(wanted)}
        self.out = None
        self.shape = (starts, paths, len(wanted))

    def update(self, step, x):
        i = self.wanted.get(step)
        if i is not None:
            if self.out is None:
                self.out = np.empty(self.shape + (x.shape[2],))
            self.out[:, :, i, :] = x

    def result(self):
        return self.out


def energy_distance(x: np.ndarray, y: np.ndarray) -> float:
    """Energy distance between two samples (rows are points)."""
    from scipy.spatial.distance import cdist

    return float(2 * cdist(x, y).mean() - cdist(x, x).mean() - cdist(y, y).mean())


def stationarity(
    model: SpectralModel, body: ConvexBody, seed: int = 0, paths: int = 10_000, T: float = 50.0,
    burn_in: float = 10.0, h: float = 1e-3, per_path: int = 10, threshold: float = 0.01, jobs: int = 1,
    x0=None,
) -> ResidualReport:
    """Long-run law of the projected chain against nu (KS in 1D, energy distance otherwise)."""
    steps = int(round(T / h))
    first = int(round(burn_in / h))
    wanted = np.linspace(first, steps, per_path).round().astype(int).tolist()
    start = np.zeros((1, model.dim)) if x0 is None else np.asarray(x0, dtype=float).reshape(1, model.dim)
    states = run_paths(model, body, Scheme.projected(), start, h, steps, seed, paths,
                       lambda s, p: _Collect(s, p, wanted), jobs=jobs)[0]
    samples = states.reshape(-1, model.dim)
    params = {"model": model.to_dict(), "body": body.to_dict(), "seed": seed, "paths": paths, "T": T,
              "burn_in": burn_in, "h": h, "per_path": per_path, "samples": int(samples.shape[0])}
    if model.dim == 1:
        a, b = body.interval()
        sd = float(model.sqrt_lambdas[0])
        lo, hi = ndtr(a / sd), ndtr(b / sd)
        cdf = lambda t: np.clip((ndtr(np.asarray(t) / sd) - lo) / (hi - lo), 0.0, 1.0)  # noqa: E731
        ks = stats.kstest(samples[:, 0], cdf)
        stat, extra = float(ks.statistic), {"p_value": float(ks.pvalue), "statistic": "ks"}
    else:
        ref = nu_rejection(model, body, stream(seed, 7), 8 * 4000).points[:4000]
        sub = samples[np.linspace(0, samples.shape[0] - 1, 4000).astype(int)]
        stat, extra = energy_distance(sub, ref), {"statistic": "energy_distance"}
    extra["boundary_fraction"] = float(np.mean(np.abs(body.g.value(samples) - 1.0) < 1e-9))
    return ResidualReport("stationarity", lhs=stat, rhs=threshold, stat_error=0.0, tolerance=0.0,
                          kind="inequality", error_kind="monte_carlo", params=params, extras=extra)


def dirichlet_form_identity(
    model: SpectralModel, body: ConvexBody, phi: TestFunction, psi: TestFunction,
    cfg: EstimatorConfig = EstimatorConfig(), eps: float | None = None, tolerance: float | None = None,
) -> ResidualReport:
    """With eps: int N_eps phi psi dnu_eps = -1/2 int <Dphi, Dpsi> dnu_eps.
    Without eps: int_K L phi psi dnu = -1/2 int_K <Dphi, Dpsi> dnu + 1/(2 mu(K)) int_Sigma <Dphi, n> psi dsigma.
    """
    if eps is not None:
        integ = _nu_eps(model, body, eps, cfg)
        lhs = integ.expect(lambda x: _penalized_generator(model, body, eps, phi, x) * psi(x))
        form = integ.expect(lambda x: -0.5 * np.sum(phi.grad(x) * psi.grad(x), axis=1))
        joint = integ.expect(lambda x: _penalized_generator(model, body, eps, phi, x) * psi(x)
                             + 0.5 * np.sum(phi.grad(x) * psi.grad(x), axis=1))
        return ResidualReport(
            "dirichlet_form/penalized", lhs.value, form.value,
            joint.error if joint.kind == "monte_carlo" else 0.0, _tol(cfg, model.dim, tolerance),
            error_kind=joint.kind, params=_params(model, body, cfg, eps=eps, phi=phi.describe(), psi=psi.describe()),
            extras={"error_bound": joint.error},
        )
    integ, mass = _nu(model, body, cfg)
    lhs = integ.expect(lambda x: _generator(model, phi, x) * psi(x))
    form = integ.expect(lambda x: -0.5 * np.sum(phi.grad(x) * psi.grad(x), axis=1))
    joint = integ.expect(lambda x: _generator(model, phi, x) * psi(x) + 0.5 * np.sum(phi.grad(x) * psi.grad(x), axis=1))
    surf = _surface(model, body, lambda x: np.sum(phi.grad(x) * _unit_normal(body, x), axis=1) * psi(x), cfg)
    boundary = ratio(surf, mass).scale(0.5)
    resid = combine([joint, boundary], [1.0, -1.0])
    return ResidualReport(
        "dirichlet_form/boundary", lhs.value, form.value + boundary.value,
        resid.error if resid.kind == "monte_carlo" else 0.0, _tol(cfg, model.dim, tolerance),
        error_kind=resid.kind, params=_params(model, body, cfg, phi=phi.describe(), psi=psi.describe()),
        extras={"boundary_term": boundary.value, "boundary_error": boundary.error, "form": form.value},
    )


# --------------------------------------------------------- resolvent inequalities
def resolvent_estimates(
    model: SpectralModel, body: ConvexBody, eps: float, lam: float, f, grid: GridConfig = GridConfig(),
    tolerance: float = 1e-6,
) -> list[ResidualReport]:
    """Both sides of the L2, H1 and H2-type resolvent bounds on the grid oracle, against nu_eps."""
    sol = grid_solve(model, body, eps, lam, f, grid)
    op = sol.operator
    w = op.reversible_weights()
    x = op.active_points
    phi = sol.nodal
    fv = np.asarray(f(x), dtype=float)
    dphi, d2phi = sol.derivatives()
    f2 = float(w @ fv**2)
    grad2 = float(w @ np.sum(dphi**2, axis=1))
    hess2 = float(w @ np.einsum("mkl,mlk->m", d2phi, d2phi))
    agrad2 = float(w @ np.sum(model.alpha * dphi**2, axis=1))
    out_k = ~op.inside[op.active]
    pen = 0.0
    if out_k.any():
        q = body.projection_jacobian_quadratic_form(x[out_k], dphi[out_k])
        pen = float(w[out_k] @ np.atleast_1d(q)) / eps
    lhs13 = lam * grad2 + 0.5 * hess2 + agrad2 + pen
    params = {"model": model.to_dict(), "body": body.to_dict(), "eps": eps, "lambda": lam,
              "grid": sol.describe(), "f": getattr(f, "name", "custom")}
    fmax = float(np.abs(fv).max())
    return [
        ResidualReport("resolvent/l2", float(w @ phi**2), f2 / lam**2, 0.0, tolerance, kind="inequality",
                       params=params),
        ResidualReport("resolvent/h1", grad2, 2.0 * f2 / lam, 0.0, tolerance, kind="inequality", params=params),
        ResidualReport("resolvent/h2", lhs13, 4.0 * f2, 0.0, tolerance, kind="inequality", params=params,
                       extras={"lambda_grad": lam * grad2, "half_hessian": 0.5 * hess2, "a_grad": agrad2,
                               "penalty": pen}),
        ResidualReport("resolvent/max_principle", float(np.abs(phi).max()), fmax / lam, 0.0, 1e-8,
                       kind="inequality", params=params),
    ]


def gradient_bound(
    model: SpectralModel, body: ConvexBody, eps: float, lam: float, f: TestFunction, probes: np.ndarray,
    paths: int, seed: int, h: float = 1e-3, target_tol: float = 1e-2, jobs: int = 1,
) -> list[ResidualReport]:
    """|D phi_eps(x)| <= sup|Df| / lam at each probe (Monte Carlo with CRN differences)."""
    if f.sup_grad is None or f.sup_abs is None:
        raise ValueError("gradient_bound needs declared sup|f| and sup|Df|")
    out = []
    for i, x in enumerate(np.atleast_2d(probes)):
        est = resolvent_gradient(model, body, eps, lam, f, x, paths, seed + i, h=h, target_tol=target_tol, jobs=jobs)
        out.append(ResidualReport(
            f"gradient_bound/probe{i}", est.norm, f.sup_grad / lam, est.combined_error, 0.0, kind="inequality",
            error_kind="monte_carlo",
            params={"model": model.to_dict(), "body": body.to_dict(), "f": f.describe(), "seed": seed + i,
                    "paths": paths, "h": h},
            extras=est.to_dict(),
        ))
    return out


def feynman_kac_vs_grid(
    model: SpectralModel, body: ConvexBody, eps: float, lam: float, f, x, paths: int, seed: int,
    f_sup: float, h: float = 1e-3, floor: float = 1e-2, grid: GridConfig = GridConfig(), jobs: int = 1,
) -> ResidualReport:
    """Monte Carlo resolvent value against the grid oracle at x (dimension <= 2)."""
    est = feynman_kac(model, body, eps, lam, f, x, paths, seed, h=h, f_sup=f_sup, jobs=jobs)
    sol = grid_solve(model, body, eps, lam, f, grid)
    ref = float(sol.interp(np.asarray(x, dtype=float).reshape(1, -1))[0])
    return ResidualReport(
        "feynman_kac_vs_grid", est.value, ref, est.std_error, floor, error_kind="monte_carlo",
        params={"model": model.to_dict(), "body": body.to_dict(), "grid": sol.describe(), **est.to_dict()},
    )


def neumann_convergence(
    model: SpectralModel, body: ConvexBody, lam: float, f, eps_list: Sequence[float],
    grid: GridConfig = GridConfig(), boundary_tol: float = 1e-3, center_tol: float = 1e-4,
) -> list[ResidualReport]:
    """Penalized solutions approach the Neumann solution: increments, boundary slope, extrapolation."""
    from .errors import NonCauchy
    from .resolvent import GridOperator

    sols = []
    for eps in eps_list:
        op = GridOperator(model, body, eps, grid)
        sols.append(grid_solve(model, body, eps, lam, f, grid, operator=op))
    params = {"model": model.to_dict(), "body": body.to_dict(), "lambda": lam, "eps": list(eps_list),
              "grid": sols[-1].describe(), "f": getattr(f, "name", "custom")}
    try:
        lim = neumann_limit(sols)
    except NonCauchy as exc:
        return [flag_report("neumann/monotone_increments", False, params, {"error": str(exc)})]
    direct = grid_solve(model, body, None, lam, f, grid)
    info = {**lim.to_dict(),
            "direct_neumann_boundary_derivative": list(one_sided_derivatives(direct.nodal, direct.spacing[0])),
            "finest_minus_direct": float(np.abs(lim.finest - direct.nodal).max()),
            "extrapolated_minus_direct": float(np.abs(lim.extrapolated - direct.nodal).max())}
    return [
        flag_report("neumann/monotone_increments", True, params, {"increments": lim.increments}),
        ResidualReport("neumann/boundary_derivative", lim.neumann_residual, boundary_tol, 0.0, 0.0,
                       kind="inequality", error_kind="quadrature", params=params, extras=info),
        ResidualReport("neumann/extrapolation_stability", lim.extrapolation_change, center_tol, 0.0, 0.0,
                       kind="inequality", error_kind="quadrature", params=params,
                       extras={"center_values": list(lim.center_values), "center_stability": lim.center_stability,
                               "order": lim.order}),
    ]


__all__ += ["BoundaryLimit", "energy_distance", "ChainNotMixed"]
