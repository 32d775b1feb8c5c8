"""Drift perturbations of the reflected dynamics.

Two kinds of drift are supported. A gradient drift F = -DV turns the invariant
measure into zeta = exp(-2V) nu / Z. A bounded field F enters through the operator
G = N + <F, D>, whose resolvent is built from that of N by the series

    (lam - G)^{-1} f = (lam - N)^{-1} psi,   psi - T psi = f,   T psi = <F, D (lam - N)^{-1} psi>,

which converges when lam > 2 |F|_0^2.

On the grid every operator shares one node set, and T is represented as
(G_h - N_h)(lam - N_h)^{-1}. The fixed point therefore reproduces the direct sparse
solve of (lam - G_h) phi = f up to the iteration tolerance.
"""

from __future__ import annotations

import math
from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .convexbody import ConvexBody
from .errors import NotContracting, SolverDiverged, SubcriticalLambda
from .measures import combine, ratio
from .reports import ResidualReport
from .resolvent import GridConfig, GridOperator, resolvent_gradient
from .spectral import SpectralModel, white_noise
from .verify import EstimatorConfig, _nu, _params, _sqz, _surface, _tol, _unit_normal

Field = Callable[[np.ndarray], np.ndarray]

FIXED_POINT_TOL = 1e-8
FIXED_POINT_MAX_ITER = 200
PROBES_PER_AXIS = 9


@dataclass
class DriftSpec:
    """``gradient``: F = -DV for a potential V (value/grad/hess on (m, n) arrays).
    ``bounded``: a field F with declared sup norm ``sup``."""

    kind: str
    dim: int
    potential: object | None = None
    field: Field | None = None
    sup: float | None = None
    name: str = "drift"

    @classmethod
    def gradient(cls, potential, dim: int, name: str = "gradient") -> DriftSpec:
        return cls("gradient", dim, potential=potential, name=name)

    @classmethod
    def bounded(cls, field: Field, sup: float, dim: int, name: str = "bounded") -> DriftSpec:
        if sup < 0:
            raise ValueError("sup must be nonnegative")
        return cls("bounded", dim, field=field, sup=float(sup), name=name)

    @classmethod
    def constant(cls, vector, name: str | None = None) -> DriftSpec:
        v = np.atleast_1d(np.asarray(vector, dtype=float))
        return cls.bounded(
            lambda x: np.broadcast_to(v, (np.atleast_2d(x).shape[0], v.size)).copy(),
            float(np.linalg.norm(v)), v.size, name or f"const{v.tolist()}",
        )

    def __post_init__(self):
        if self.kind not in ("gradient", "bounded"):
            raise ValueError(f"unknown drift kind {self.kind!r}")
        if self.kind == "gradient" and self.potential is None:
            raise ValueError("gradient drift needs a potential")
        if self.kind == "bounded" and (self.field is None or self.sup is None):
            raise ValueError("bounded drift needs a field and its sup norm")

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        if self.kind == "gradient":
            return -np.asarray(self.potential.grad(x))
        return np.asarray(self.field(x), dtype=float).reshape(x.shape[0], self.dim)

    def validate(self, points: np.ndarray, fd_step: float = 1e-5, fd_tol: float = 1e-6) -> None:
        """Gradient kind: DV against central differences. Bounded kind: |F| <= sup."""
        points = np.atleast_2d(points)
        if self.kind == "gradient":
            v = self.potential
            fd = np.stack(
                [(v(points + fd_step * e) - v(points - fd_step * e)) / (2 * fd_step) for e in np.eye(self.dim)],
                axis=1,
            )
            err = float(np.abs(fd - v.grad(points)).max())
            if err > fd_tol:
                raise ValueError(f"DV disagrees with finite differences by {err:.2e}")
        else:
            peak = float(np.linalg.norm(self(points), axis=1).max())
            if peak > self.sup * (1 + 1e-12) + 1e-15:
                raise ValueError(f"|F| reaches {peak:.4g} above the declared sup {self.sup:.4g}")

    def sup_norm(self, points: np.ndarray | None = None) -> float:
        if self.kind == "bounded":
            return float(self.sup)
        sup = getattr(self.potential, "sup_grad", None)
        if sup is not None:
            return float(sup)
        if points is None:
            raise ValueError("gradient drift without sup_grad needs points to bound |DV|")
        return float(np.linalg.norm(self.potential.grad(points), axis=1).max())

    def describe(self) -> dict:
        out = {"kind": self.kind, "dim": self.dim, "name": self.name}
        if self.kind == "bounded":
            out["sup"] = self.sup
        else:
            out["potential"] = getattr(self.potential, "describe", lambda: "custom")()
        return out


def lambda0(sup: float) -> float:
    """Threshold 2 |F|_0^2 above which the resolvent series converges."""
    return 2.0 * sup**2


def contraction_bound(lam: float, sup: float) -> float:
    return math.sqrt(2.0 / lam) * sup


# ----------------------------------------------------------------- zeta IBP
def zeta_ibp(
    model: SpectralModel, body: ConvexBody, potential, phi, z, cfg: EstimatorConfig = EstimatorConfig(),
    tolerance: float | None = None,
) -> ResidualReport:
    """int <Dphi, Q^{1/2}z> dzeta = 2 int <DV, Q^{1/2}z> phi dzeta
    + 1/(mu(K) Z) int_Sigma phi <n, Q^{1/2}z> exp(-2V) dsigma + int W_z phi dzeta."""
    sqz = _sqz(model, z)
    integ, mass = _nu(model, body, cfg)

    def w(x):
        return np.exp(-2.0 * np.asarray(potential(x)))

    zn = integ.expect(w)
    grad_t = integ.expect(lambda x: (phi.grad(x) @ sqz) * w(x))
    dv_t = integ.expect(lambda x: 2.0 * (potential.grad(x) @ sqz) * phi(x) * w(x))
    wz_t = integ.expect(lambda x: white_noise(model, z, x) * phi(x) * w(x))
    joint = integ.expect(
        lambda x: ((phi.grad(x) @ sqz) - 2.0 * (potential.grad(x) @ sqz) * phi(x) - white_noise(model, z, x) * phi(x))
        * w(x)
    )
    surf = _surface(model, body, lambda x: phi(x) * (_unit_normal(body, x) @ sqz) * w(x), cfg)
    boundary = ratio(surf, mass)
    resid = ratio(combine([joint, boundary], [1.0, -1.0]), zn)
    g, d, b, wz = (grad_t.value / zn.value, dv_t.value / zn.value, boundary.value / zn.value, wz_t.value / zn.value)
    return ResidualReport(
        "zeta_ibp", lhs=g, rhs=d + b + wz,
        stat_error=resid.error if resid.kind == "monte_carlo" else 0.0,
        tolerance=_tol(cfg, model.dim, tolerance), error_kind=resid.kind,
        params=_params(model, body, cfg, phi=phi.describe(), z=list(map(float, z)),
                       potential=getattr(potential, "describe", lambda: "custom")()),
        extras={"drift_term": d, "boundary_term": b, "white_noise_term": wz, "normalizer": zn.value,
                "error_bound": resid.error},
    )


# --------------------------------------------------------------- grid operators
@dataclass
class DriftGrid:
    """Neumann operators N_h and G_h on the nodes of K, sharing one grid."""

    base: GridOperator
    drifted: GridOperator
    drift: DriftSpec

    @classmethod
    def build(cls, model: SpectralModel, body: ConvexBody, drift: DriftSpec, grid: GridConfig = GridConfig()):
        if drift.dim != model.dim:
            raise ValueError("drift and model dimensions differ")
        base = GridOperator(model, body, None, grid)
        if drift.kind == "gradient":
            drifted = GridOperator(model, body, None, grid, axes=base.axes,
                                   extra_potential=lambda x: 2.0 * np.asarray(drift.potential(x)))
        else:
            drifted = GridOperator(model, body, None, grid, axes=base.axes,
                                   edge_drift=lambda mid, k: drift(mid)[:, k])
        return cls(base, drifted, drift)

    @property
    def points(self) -> np.ndarray:
        return self.base.active_points

    @property
    def weights(self) -> np.ndarray:
        """nu-weights of the nodes (sum to one)."""
        return self.base.reversible_weights()

    @property
    def perturbation(self) -> sp.csr_matrix:
        return (self.drifted.matrix - self.base.matrix).tocsr()

    def norm(self, v: np.ndarray) -> float:
        """L2(nu) norm on the grid."""
        return float(np.sqrt(self.weights @ (v * v)))


def _factor(op: GridOperator, lam: float):
    m = op.matrix.shape[0]
    lu = spla.splu((lam * sp.identity(m, format="csc") - op.matrix).tocsc())
    return lu


@dataclass
class TLambdaResult:
    points: np.ndarray
    values: np.ndarray
    std_error: np.ndarray
    backend: str
    ratio: float | None = None  # |T psi| / |psi| in L2(nu) (grid backend)
    bound: float | None = None

    def to_dict(self) -> dict:
        return {"backend": self.backend, "points": self.points.tolist(), "values": self.values.tolist(),
                "std_error": self.std_error.tolist(), "ratio": self.ratio, "bound": self.bound}


def probe_grid(body: ConvexBody, dim: int, per_axis: int = PROBES_PER_AXIS) -> np.ndarray:
    """Tensor grid of ``per_axis`` points per axis over the bounding box of K, clipped to K."""
    ticks = []
    for k in range(dim):
        u = np.zeros(dim)
        u[k] = 1.0
        lo, hi = -float(body.boundary_radius(-u)), float(body.boundary_radius(u))
        ticks.append(np.linspace(lo, hi, per_axis + 2)[1:-1])
    mesh = np.meshgrid(*ticks, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    return body.project_points(pts)[0]


def t_lambda_apply(
    model: SpectralModel, body: ConvexBody, drift: DriftSpec, lam: float, psi, backend: str = "grid",
    grid: GridConfig = GridConfig(), probes: np.ndarray | None = None, paths: int = 2000, seed: int = 0,
    eps: float = 1e-3, h: float = 1e-3, jobs: int = 1,
) -> TLambdaResult:
    """T psi = <F, D (lam - N)^{-1} psi>.

    ``grid``: every node of K (n <= 2), N being the Neumann grid operator.
    ``monte_carlo``: probe points, with N replaced by N_eps and the gradient from
    common-random-number differences of the Feynman-Kac estimate.
    """
    if lam <= 0:
        raise ValueError("lambda must be positive")
    if backend == "grid":
        dg = DriftGrid.build(model, body, drift, grid)
        values = np.asarray(psi(dg.points), dtype=float)
        tv = dg.perturbation @ _factor(dg.base, lam).solve(values)
        ratio_ = dg.norm(tv) / dg.norm(values) if dg.norm(values) > 0 else 0.0
        return TLambdaResult(dg.points, tv, np.zeros_like(tv), "grid", ratio_,
                             contraction_bound(lam, drift.sup_norm(dg.points)))
    if backend != "monte_carlo":
        raise ValueError(f"unknown backend {backend!r}")
    pts = probe_grid(body, model.dim) if probes is None else np.atleast_2d(probes)
    vals, errs = [], []
    for i, x in enumerate(pts):
        est = resolvent_gradient(model, body, eps, lam, psi, x, paths, seed + i, h=h, jobs=jobs)
        fx = drift(x[None, :])[0]
        vals.append(float(fx @ est.value))
        errs.append(float(np.sqrt(np.sum((fx * est.std_error) ** 2))))
    return TLambdaResult(pts, np.asarray(vals), np.asarray(errs), "monte_carlo", None,
                         contraction_bound(lam, drift.sup_norm(pts)))


# ------------------------------------------------------------ perturbed resolvent
@dataclass
class PerturbedResolvent:
    points: np.ndarray
    values: np.ndarray  # (lam - G)^{-1} f by the series
    direct: np.ndarray  # direct sparse solve of (lam - G_h) phi = f
    increments: list[float]
    ratios: list[float]
    observed_ratio: float
    bound: float
    lam: float
    lambda0: float

    @property
    def iterations(self) -> int:
        return len(self.increments)

    @property
    def sup_difference(self) -> float:
        return float(np.abs(self.values - self.direct).max())

    def to_dict(self) -> dict:
        return {"lambda": self.lam, "lambda0": self.lambda0, "iterations": self.iterations,
                "increments": self.increments, "observed_ratio": self.observed_ratio, "bound": self.bound,
                "sup_difference": self.sup_difference}


def perturbed_resolvent(
    model: SpectralModel, body: ConvexBody, drift: DriftSpec, lam: float, f, grid: GridConfig = GridConfig(),
    tol: float = FIXED_POINT_TOL, max_iter: int = FIXED_POINT_MAX_ITER, margin: float = 0.1,
    enforce_threshold: bool = True,
) -> PerturbedResolvent:
    """Solve (lam - G) phi = f through psi = f + T psi on the grid.

    Increments are measured in L2(nu). NotContracting is raised when the geometric
    decay rate exceeds min(1, bound * (1 + margin)) or the iteration does not settle
    within ``max_iter`` steps. ``enforce_threshold=False`` allows probing lam <= lambda0.
    """
    dg = DriftGrid.build(model, body, drift, grid)
    sup = drift.sup_norm(dg.points)
    lam0 = lambda0(sup)
    if enforce_threshold and lam <= lam0:
        raise SubcriticalLambda(f"lambda={lam:g} does not exceed lambda0={lam0:g}")
    bound = contraction_bound(lam, sup)
    lu = _factor(dg.base, lam)
    pert = dg.perturbation
    rhs = np.asarray(f(dg.points), dtype=float)
    psi = rhs.copy()
    incs: list[float] = []
    allowed = min(1.0, bound * (1.0 + margin)) if sup > 0 else 1.0
    scale = max(dg.norm(rhs), 1e-300)
    for _ in range(max_iter):
        nxt = rhs + pert @ lu.solve(psi)
        incs.append(dg.norm(nxt - psi))
        psi = nxt
        if not np.all(np.isfinite(psi)):
            raise NotContracting("fixed-point iterates are not finite")
        if incs[-1] <= tol * scale:
            break
        if len(incs) >= 3 and incs[-1] / incs[-2] > allowed and incs[-1] > 1e3 * tol * scale:
            raise NotContracting(
                f"increment ratio {incs[-1] / incs[-2]:.3g} exceeds {allowed:.3g} at iteration {len(incs)}"
            )
    else:
        raise NotContracting(f"no convergence in {max_iter} iterations (last increment {incs[-1]:.2e})")
    ratios = [b / a for a, b in zip(incs, incs[1:]) if a > 0 and b > 1e3 * tol * scale]
    observed = max(ratios) if ratios else 0.0
    values = lu.solve(psi)
    direct = _factor(dg.drifted, lam).solve(rhs)
    return PerturbedResolvent(dg.points, values, direct, incs, ratios, observed, bound, lam, lam0)


def series_reports(res: PerturbedResolvent, params: dict, direct_tol: float = 1e-6,
                   ratio_slack: float = 1.1) -> list[ResidualReport]:
    return [
        ResidualReport("perturb/series_vs_direct", res.sup_difference, 0.0, 0.0, direct_tol, params=params,
                       extras=res.to_dict()),
        ResidualReport("perturb/contraction_ratio", res.observed_ratio, res.bound * ratio_slack, 0.0, 0.0,
                       kind="inequality", params=params, extras={"ratios": res.ratios}),
    ]


# --------------------------------------------------------------- invariant density
@dataclass
class InvariantDensity:
    points: np.ndarray
    density: np.ndarray  # with respect to nu; sum(weights * density) = 1
    weights: np.ndarray
    residual: float  # sup |G* rho|
    iterations: int
    invariance: dict = field(default_factory=dict)  # t -> max |int Q_t phi dzeta - int phi dzeta|

    def to_dict(self) -> dict:
        return {"residual": self.residual, "iterations": self.iterations,
                "min_density": float(self.density.min()), "invariance": self.invariance}


def invariant_density(
    model: SpectralModel, body: ConvexBody, drift: DriftSpec, grid: GridConfig = GridConfig(), lam: float = 0.1,
    tol: float = 1e-8, max_iter: int = 500, times: tuple[float, ...] = (0.1, 1.0), observables=None,
) -> InvariantDensity:
    """rho >= 0 with G* rho = 0 and int rho dnu = 1, by projected inverse iteration on (lam - G*)^{-1}.

    G* is the adjoint of G_h in L2(nu): W^{-1} G_h^T W with W the nu-weights.
    """
    if model.dim != 1:
        raise ValueError("invariant_density works on the 1D grid")
    dg = DriftGrid.build(model, body, drift, grid)
    w = dg.weights
    adj = (sp.diags(1.0 / w) @ dg.drifted.matrix.T @ sp.diags(w)).tocsc()
    m = adj.shape[0]
    lu = spla.splu((lam * sp.identity(m, format="csc") - adj).tocsc())
    rho = np.ones(m)
    resid = math.inf
    for it in range(1, max_iter + 1):
        rho = np.maximum(lu.solve(rho), 0.0)
        total = float(w @ rho)
        if not np.isfinite(total) or total <= 0:
            raise SolverDiverged("inverse iteration lost positivity")
        rho /= total
        resid = float(np.abs(adj @ rho).max())
        if resid < tol:
            break
    else:
        raise SolverDiverged(f"inverse iteration stalled at |G* rho| = {resid:.2e}")
    pts = dg.points
    obs = observables or [lambda x: x[:, 0], lambda x: np.cos(3 * x[:, 0]), lambda x: x[:, 0] ** 2]
    pi = w * rho
    gen = dg.drifted.matrix.toarray()  # a few hundred nodes; dense exponential is exact and fast
    vals = np.stack([np.asarray(phi(pts), dtype=float) for phi in obs], axis=1)
    inv = {}
    for t in times:
        moved = sla.expm(t * gen) @ vals
        inv[f"{t:g}"] = float(np.abs(pi @ moved - pi @ vals).max())
    return InvariantDensity(pts, rho, w, resid, it, inv)


def gradient_density_error(dens: InvariantDensity, potential) -> float:
    """sup |rho - exp(-2V)/Z| with Z = int exp(-2V) dnu on the grid."""
    target = np.exp(-2.0 * np.asarray(potential(dens.points)))
    target /= dens.weights @ target
    return float(np.abs(dens.density - target).max())


def l1_dissipativity(
    model: SpectralModel, body: ConvexBody, drift: DriftSpec, functions, grid: GridConfig = GridConfig(),
    density: InvariantDensity | None = None,
) -> list[float]:
    """int sign(phi) G phi dzeta for each function (nonpositive for a dissipative G)."""
    dg = DriftGrid.build(model, body, drift, grid)
    dens = density or invariant_density(model, body, drift, grid)
    pi = dens.weights * dens.density
    out = []
    for phi in functions:
        v = np.asarray(phi(dg.points), dtype=float)
        out.append(float(pi @ (np.sign(v) * (dg.drifted.matrix @ v))))
    return out
